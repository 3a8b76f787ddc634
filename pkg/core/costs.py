"""
Stage and terminal costs for the sampling controllers.

All terms accept a single state or a batch with a leading sample axis and are
pure functions of their inputs, so rollout workers can share one grid
snapshot. Two cost stacks share every term except the goal slot:
PerceptionAwareCost (goal + action + collision + perception) and
TrackingCost (reference tracking + action + collision). Given a guidance
field, both bill collisions on the inflated grid and the perception-aware
stack adds a progress term on the geodesic cost-to-go.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from core.dynamics import ControlCommand, QuadState, body_x_axis
from core.guidance import GuidanceField
from core.mapping import FREE, OccupancyGrid, RayOutcome, lookup, raycast_dda, raycast_many, voxel_index
from core.reference import ReferenceTrajectory, TrackingParams, tracking_stage_cost

logger = logging.getLogger(__name__)

Vec4 = Tuple[float, float, float, float]


@dataclass(frozen=True)
class CostParams:
    c_pos: float = 2.5
    c_psi: float = 1.0
    c_collision: float = 15.0
    c_PoI: float = 5.0
    c_thresh: float = 0.5
    c_free: float = -5.0
    c_unknown: float = -1.0
    c_occupied: float = 2.0
    R: Vec4 = (0.01, 0.1, 0.1, 0.2)
    R_delta: Vec4 = (0.02, 0.02, 0.02, 0.05)
    c_safe: float = 0.0
    v_bound: float = 0.1
    omega_bound: float = 0.5
    raytrace_stride: int = 10
    c_progress: float = 1.0

    def __post_init__(self) -> None:
        if len(self.R) != 4 or len(self.R_delta) != 4:
            raise ValueError("R and R_delta need four diagonal entries")
        if min(self.R) < 0 or min(self.R_delta) < 0:
            raise ValueError("R and R_delta entries must be non-negative")
        if self.c_collision <= 0:
            raise ValueError("c_collision must be positive")
        if not self.c_free < self.c_unknown < 0 < self.c_occupied:
            raise ValueError("ray weights must satisfy c_free < c_unknown < 0 < c_occupied")
        if self.raytrace_stride < 1:
            raise ValueError("raytrace_stride must be at least 1")
        if self.c_progress < 0:
            raise ValueError("c_progress must be non-negative")

    def ray_table(self) -> np.ndarray:
        """Ray term indexed by RayOutcome; leaving the box bills as unknown."""
        table = np.empty(len(RayOutcome))
        table[RayOutcome.REACHED_GOAL] = self.c_free
        table[RayOutcome.HIT_OCCUPIED] = self.c_occupied
        table[RayOutcome.HIT_UNKNOWN] = self.c_unknown
        table[RayOutcome.LEFT_BOUNDS] = self.c_unknown
        return table


@dataclass(frozen=True)
class GoalPose:
    p_goal: Tuple[float, float, float]
    psi_goal: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.p_goal, dtype=np.float64)


@dataclass
class CostBreakdown:
    goal: np.ndarray
    action: np.ndarray
    collision: np.ndarray
    perception: np.ndarray
    progress: Union[np.ndarray, float] = 0.0

    @property
    def total(self) -> np.ndarray:
        return self.goal + self.action + self.collision + self.perception + self.progress

    def as_dict(self, row: Optional[int] = None) -> dict:
        def pick(a) -> float:
            a = np.asarray(a)
            return float(a[row]) if row is not None and a.ndim else float(a)

        return {
            "goal": pick(self.goal),
            "action": pick(self.action),
            "collision": pick(self.collision),
            "perception": pick(self.perception),
            "progress": pick(self.progress),
            "total": pick(self.total),
        }


CommandLike = Union[ControlCommand, np.ndarray]


def _command_vector(u: CommandLike) -> np.ndarray:
    if isinstance(u, ControlCommand):
        return u.as_vector()
    return np.asarray(u, dtype=np.float64)


def wrap_angle(a):
    return np.arctan2(np.sin(a), np.cos(a))


def goal_cost(s: QuadState, goal: GoalPose, prm: CostParams):
    d = s.p_WB - goal.position
    dist_sq = np.sum(d * d, axis=-1)
    dpsi = wrap_angle(s.yaw() - goal.psi_goal)
    return (-prm.c_pos + prm.c_psi * np.abs(dpsi)) * np.exp(-dist_sq)


def action_cost(u: CommandLike, u_prev: CommandLike, prm: CostParams):
    u = _command_vector(u)
    du = u - _command_vector(u_prev)
    R = np.asarray(prm.R)
    Rd = np.asarray(prm.R_delta)
    # fixed-order sum over channels
    out = R[0] * u[..., 0] ** 2 + Rd[0] * du[..., 0] ** 2
    for i in range(1, 4):
        out = out + R[i] * u[..., i] ** 2 + Rd[i] * du[..., i] ** 2
    return out


def collision_cost(p, grid: OccupancyGrid, prm: CostParams):
    """Unknown (including out of bounds) and occupied voxels are both billed."""
    return np.where(lookup(grid, p) != FREE, prm.c_collision, 0.0)


def poi_cost(s: QuadState, goal: GoalPose, prm: CostParams):
    d = goal.position - s.p_WB
    dist = np.linalg.norm(d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d_hat = d / dist[..., None]
    align = np.sum(body_x_axis(s.q_WB) * d_hat, axis=-1)
    term = prm.c_PoI * (1.0 - align) ** 2
    return np.where(dist > prm.c_thresh, term, 0.0)


def ray_cost(s: QuadState, grid: OccupancyGrid, goal: GoalPose, prm: CostParams):
    """Ray term from the center of the vehicle's voxel toward the goal; one cast per distinct voxel."""
    p = np.asarray(s.p_WB)
    idx = voxel_index(grid.origin, grid.resolution, p)
    if p.ndim == 1:
        start = grid.origin + (idx + 0.5) * grid.resolution
        outcome = raycast_dda(grid, start, goal.position).outcome
        return prm.ray_table()[int(outcome)]
    cells, inverse = np.unique(idx.reshape(-1, 3), axis=0, return_inverse=True)
    codes = raycast_many(grid, grid.origin + (cells + 0.5) * grid.resolution, goal.position)
    return prm.ray_table()[codes[inverse.reshape(-1)]].reshape(p.shape[:-1])


def perception_cost(s: QuadState, grid: OccupancyGrid, goal: GoalPose, prm: CostParams, do_raytrace: bool):
    poi = poi_cost(s, goal, prm)
    if not do_raytrace:
        return poi
    return poi + ray_cost(s, grid, goal, prm)


def terminal_cost(s: QuadState, prm: CostParams):
    speed = np.linalg.norm(s.v_WB, axis=-1)
    rate = np.linalg.norm(s.omega_B, axis=-1)
    outside = (speed > prm.v_bound) | (rate > prm.omega_bound)
    return np.where(outside, prm.c_safe, 0.0)


def does_raytrace(step_index: int, prm: CostParams) -> bool:
    return step_index % prm.raytrace_stride == 0


def stage_breakdown(s, u, u_prev, grid, goal, prm: CostParams, step_index: int) -> CostBreakdown:
    return CostBreakdown(
        goal=goal_cost(s, goal, prm),
        action=action_cost(u, u_prev, prm),
        collision=collision_cost(s.p_WB, grid, prm),
        perception=perception_cost(s, grid, goal, prm, does_raytrace(step_index, prm)),
    )


def stage_cost(s, u, u_prev, grid, goal, prm: CostParams, step_index: int):
    return stage_breakdown(s, u, u_prev, grid, goal, prm, step_index).total


def _contact(guidance: Optional[GuidanceField], p) -> np.ndarray:
    if guidance is None:
        return np.zeros(np.shape(p)[:-1], dtype=bool)
    return guidance.blocked(p)


class PerceptionAwareCost:
    """
    Cost stack of the perception-aware controller, bound to one grid snapshot.

    With a guidance field the collision term reads the inflated grid and a
    progress term bills the geodesic cost-to-go; without one the stack is
    exactly goal + action + collision + perception.
    """

    name = "pa-mppi"

    def __init__(self, grid: OccupancyGrid, goal: GoalPose, prm: CostParams, guidance: Optional[GuidanceField] = None):
        self.grid = grid
        self.goal = goal
        self.prm = prm
        self.guidance = guidance

    def stage_terms(self, s: QuadState, u, u_prev, step_index: int) -> CostBreakdown:
        if self.guidance is None:
            return stage_breakdown(s, u, u_prev, self.grid, self.goal, self.prm, step_index)
        return CostBreakdown(
            goal=goal_cost(s, self.goal, self.prm),
            action=action_cost(u, u_prev, self.prm),
            collision=collision_cost(s.p_WB, self.guidance.grid, self.prm),
            perception=perception_cost(s, self.grid, self.goal, self.prm, does_raytrace(step_index, self.prm)),
            progress=self.prm.c_progress * self.guidance.cost_to_go(s.p_WB),
        )

    def terminal(self, s: QuadState):
        return terminal_cost(s, self.prm)

    def contact(self, p) -> np.ndarray:
        return _contact(self.guidance, p)


class TrackingCost:
    """
    Baseline stack: the goal slot holds the reference tracking error and the
    perception slot stays zero. Rollout step i is evaluated at reference
    time t0 + i * dt_pred.
    """

    name = "tracking-mppi"

    def __init__(
        self,
        grid: OccupancyGrid,
        goal: GoalPose,
        prm: CostParams,
        reference: ReferenceTrajectory,
        t0: float,
        dt_pred: float,
        tracking: Optional[TrackingParams] = None,
        guidance: Optional[GuidanceField] = None,
    ):
        self.grid = grid
        self.goal = goal
        self.prm = prm
        self.reference = reference
        self.t0 = t0
        self.dt_pred = dt_pred
        self.tracking = tracking or TrackingParams()
        self.guidance = guidance

    def stage_terms(self, s: QuadState, u, u_prev, step_index: int) -> CostBreakdown:
        t = self.t0 + step_index * self.dt_pred
        track = tracking_stage_cost(s, t, self.reference, self.tracking)
        billed = self.guidance.grid if self.guidance is not None else self.grid
        return CostBreakdown(
            goal=track,
            action=action_cost(u, u_prev, self.prm),
            collision=collision_cost(s.p_WB, billed, self.prm),
            perception=np.zeros_like(track),
        )

    def terminal(self, s: QuadState):
        return terminal_cost(s, self.prm)

    def contact(self, p) -> np.ndarray:
        return _contact(self.guidance, p)
