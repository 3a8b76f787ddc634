"""
Straight-line waypoints and rest-to-rest minimum-jerk references for the
tracking baseline controller.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Below this speed the reference yaw falls back to the goal yaw.
_HOLD_SPEED = 1e-3
_COLLINEAR_TOL = 1e-9


@dataclass(frozen=True)
class TrackingParams:
    q_pos: float = 2.5
    q_yaw: float = 1.0
    n_waypoints: int = 10
    duration: float = 4.0

    def __post_init__(self) -> None:
        if self.q_pos < 0 or self.q_yaw < 0:
            raise ValueError("tracking weights must be non-negative")
        if self.n_waypoints < 2:
            raise ValueError("need at least two waypoints")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


def _quintic(tau):
    """Normalized rest-to-rest profile and its first two derivatives w.r.t. tau."""
    tau = np.clip(tau, 0.0, 1.0)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    ds = 30 * tau**2 - 60 * tau**3 + 30 * tau**4
    dds = 60 * tau - 180 * tau**2 + 120 * tau**3
    return s, ds, dds


def straight_line_waypoints(start, goal, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"need at least two waypoints, got {n}")
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    frac = np.arange(n, dtype=np.float64) / (n - 1)
    return start + frac[:, None] * (goal - start)


def _is_straight_run(waypoints: np.ndarray) -> bool:
    """True when the waypoints march monotonically along the start-goal segment."""
    span = waypoints[-1] - waypoints[0]
    length = np.linalg.norm(span)
    if length == 0.0:
        return bool(np.allclose(waypoints, waypoints[0], atol=_COLLINEAR_TOL))
    axis = span / length
    rel = waypoints - waypoints[0]
    along = rel @ axis
    off_line = np.linalg.norm(rel - along[:, None] * axis, axis=-1)
    return bool(np.all(off_line <= _COLLINEAR_TOL * max(length, 1.0)) and np.all(np.diff(along) >= 0.0))


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Piecewise quintic through knots; one segment when the knots lie on a straight run."""

    knots: np.ndarray
    knot_times: np.ndarray
    duration: float
    goal_yaw: float = 0.0

    def _segment(self, t: float) -> int:
        seg = int(np.searchsorted(self.knot_times, t, side="right")) - 1
        return min(max(seg, 0), len(self.knots) - 2)

    def sample(self, t: float) -> Tuple[np.ndarray, np.ndarray, float]:
        """Position, velocity and yaw at time t, clamped to [0, duration]."""
        t = min(max(float(t), 0.0), self.duration)
        k = self._segment(t)
        t0, t1 = self.knot_times[k], self.knot_times[k + 1]
        seg_time = t1 - t0
        tau = (t - t0) / seg_time
        s, ds, _ = _quintic(tau)
        delta = self.knots[k + 1] - self.knots[k]
        position = self.knots[k] + s * delta
        velocity = (ds / seg_time) * delta
        return position, velocity, self.yaw_for(velocity)

    def acceleration(self, t: float) -> np.ndarray:
        t = min(max(float(t), 0.0), self.duration)
        k = self._segment(t)
        seg_time = self.knot_times[k + 1] - self.knot_times[k]
        _, _, dds = _quintic((t - self.knot_times[k]) / seg_time)
        return (dds / seg_time**2) * (self.knots[k + 1] - self.knots[k])

    def yaw_for(self, velocity: np.ndarray) -> float:
        if np.hypot(velocity[0], velocity[1]) < _HOLD_SPEED:
            return self.goal_yaw
        return float(np.arctan2(velocity[1], velocity[0]))

    def polyline(self, n: int = 200) -> np.ndarray:
        """(n, 5) rows of t, x, y, z, yaw sampled uniformly over the duration."""
        rows = []
        for t in np.linspace(0.0, self.duration, n):
            p, _, yaw = self.sample(t)
            rows.append([t, p[0], p[1], p[2], yaw])
        return np.asarray(rows)


def min_jerk_trajectory(waypoints, duration: float, goal_yaw: float = 0.0) -> ReferenceTrajectory:
    """
    Rest-to-rest minimum-jerk reference. Collinear waypoints collapse to the
    single closed-form quintic between the end points; otherwise each leg is
    its own rest-to-rest quintic with time split in proportion to leg length.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    waypoints = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
    if waypoints.shape[0] < 2:
        raise ValueError("need at least two waypoints")

    if _is_straight_run(waypoints):
        knots = waypoints[[0, -1]]
        times = np.array([0.0, duration])
    else:
        legs = np.linalg.norm(np.diff(waypoints, axis=0), axis=-1)
        keep = np.concatenate([[True], legs > 0.0])
        knots = waypoints[keep]
        legs = legs[legs > 0.0]
        times = np.concatenate([[0.0], np.cumsum(legs) / legs.sum() * duration])
        times[-1] = duration
        logger.debug("[Reference] %d-leg reference over %.2f s", len(legs), duration)

    return ReferenceTrajectory(knots=knots, knot_times=times, duration=float(duration), goal_yaw=goal_yaw)


def tracking_stage_cost(s, t: float, ref: ReferenceTrajectory, prm: Optional[TrackingParams] = None):
    """q_pos * |p - p_ref(t)|^2 + q_yaw * |wrapped yaw error|; works on batched states."""
    prm = prm or TrackingParams()
    p_ref, _, yaw_ref = ref.sample(t)
    err = s.p_WB - p_ref
    pos_term = prm.q_pos * np.sum(err * err, axis=-1)
    dpsi = s.yaw() - yaw_ref
    dpsi = np.arctan2(np.sin(dpsi), np.cos(dpsi))
    return pos_term + prm.q_yaw * np.abs(dpsi)
