"""
Closed-loop episode runner on a virtual clock.

The control tick drives everything: depth frames and grid snapshots fire on
integer tick schedules, the optimizer only reads published snapshots, and the
plant advances one dt_ctrl per tick. Termination is checked after each plant
step, collision first.
"""

import logging
import math
from collections import deque
from typing import TYPE_CHECKING, Optional

import numpy as np

from core.costs import GoalPose, PerceptionAwareCost, TrackingCost, wrap_angle
from core.dynamics import QuadState, step
from core.guidance import GuidanceCache
from core.mapping import VoxelMap, coverage_fraction, snapshot_grid
from core.mppi import MppiController, OptimizerStarvation
from core.publisher import GridPublisher
from core.reference import min_jerk_trajectory, straight_line_waypoints
from core.world import build_scene, true_collision

from .observation import init_observation, observe
from .types import EpisodeConfig, EpisodeResult, StepRecord, Termination

if TYPE_CHECKING:
    from tools.config import RunConfig

logger = logging.getLogger(__name__)


class TickSchedule:
    """Event j of a rate-r stream is due at control tick k once j * control_hz <= k * r."""

    def __init__(self, rate_hz: int, control_hz: int):
        if rate_hz > control_hz:
            raise ValueError(f"event rate {rate_hz} Hz exceeds the control rate {control_hz} Hz")
        self.rate_hz = rate_hz
        self.control_hz = control_hz
        self.next_event = 0
        self.fired = 0

    def due(self, tick: int) -> bool:
        if self.next_event * self.control_hz <= tick * self.rate_hz:
            self.next_event += 1
            self.fired += 1
            return True
        return False


def control_rate(dt_ctrl: float) -> int:
    hz = int(round(1.0 / dt_ctrl))
    if abs(hz * dt_ctrl - 1.0) > 1e-9:
        raise ValueError(f"dt_ctrl={dt_ctrl} does not divide one second into whole ticks")
    return hz


def _reached_goal(state: QuadState, goal: GoalPose, cfg: EpisodeConfig) -> bool:
    dist = float(np.linalg.norm(state.p_WB - goal.position))
    yaw_err = abs(float(wrap_angle(state.yaw() - goal.psi_goal)))
    speed = float(np.linalg.norm(state.v_WB))
    return dist < cfg.goal_pos_tol and yaw_err < cfg.goal_yaw_tol and speed < cfg.goal_speed_tol


def _record(t: float, state: QuadState, command, diagnostics, version: int) -> StepRecord:
    return StepRecord(
        t=t,
        p=state.p_WB.tolist(),
        q=state.q_WB.tolist(),
        v=state.v_WB.tolist(),
        omega=state.omega_B.tolist(),
        command=command.as_vector().tolist(),
        costs=diagnostics.breakdown,
        L_min=diagnostics.L_min,
        ESS=diagnostics.ess,
        snapshot_version=version,
    )


def run_episode(cfg: EpisodeConfig, run: Optional["RunConfig"] = None) -> EpisodeResult:
    """Runs one episode; an unexpected failure inside the loop becomes a Stuck result with the error text."""
    if run is None:
        from tools.config import RunConfig

        run = RunConfig()
    scene = build_scene(cfg.scene, run.quad.collision_radius)
    try:
        return _simulate(cfg, run, scene)
    except Exception as exc:
        logger.exception("[Episode] %s on %s crashed", cfg.controller, cfg.scene.family)
        return EpisodeResult(config=cfg, termination=Termination.STUCK, error=f"{type(exc).__name__}: {exc}")


def _simulate(cfg: EpisodeConfig, run: "RunConfig", scene) -> EpisodeResult:
    qp = run.quad
    dt = run.mppi.dt_ctrl
    hz = control_rate(dt)
    goal = GoalPose(scene.goal_position, scene.goal_yaw)
    state = QuadState.hover(scene.start_position, scene.start_yaw)

    voxel_map = VoxelMap(scene.bounds.lower, scene.bounds.upper, run.mapping.resolution)
    init_observation(cfg.init_observation, scene, state, voxel_map, run.camera, cfg.render_hz, cfg.sweep_duration)
    publisher = GridPublisher()

    controller = MppiController(run.mppi, qp, run.costs, seed=cfg.seed)
    planner = GuidanceCache(qp.collision_radius) if cfg.guidance else None
    field, field_version = None, 0
    reference = None
    if cfg.controller == "tracking-mppi":
        waypoints = straight_line_waypoints(scene.start_position, scene.goal_position, run.tracking.n_waypoints)
        reference = min_jerk_trajectory(waypoints, run.tracking.duration, goal_yaw=scene.goal_yaw)

    renders = TickSchedule(cfg.render_hz, hz)
    snapshots = TickSchedule(cfg.snapshot_hz, hz)
    window = max(int(round(cfg.stuck_window * hz)), 1)
    recent = deque([state.p_WB.copy()], maxlen=window + 1)

    result = EpisodeResult(config=cfg, termination=Termination.STUCK, reference=reference)
    max_ticks = int(math.ceil(cfg.timeout * hz - 1e-9))
    logger.info(
        "[Episode] %s in %s(%.2f, seed %d), controller seed %d",
        cfg.controller,
        cfg.scene.family,
        cfg.scene.size,
        cfg.scene.seed,
        cfg.seed,
    )

    tick = 0
    for tick in range(max_ticks):
        t = tick / hz
        if renders.due(tick):
            observe(scene, voxel_map, state.p_WB, state.q_WB, run.camera)
        if snapshots.due(tick):
            grid = snapshot_grid(voxel_map)
            publisher.publish(grid)
            result.coverage.append((t, coverage_fraction(grid)))

        version, grid = publisher.latest()
        if planner is not None and version != field_version:
            builds = planner.builds
            field, field_version = planner.field_for(grid, goal.position), version
            if planner.builds > builds and not field.is_reachable(state.p_WB):
                logger.warning("[Episode] goal unreachable in the known map at t=%.2f", t)
        if reference is not None:
            cost = TrackingCost(grid, goal, run.costs, reference, t, run.mppi.dt_pred, run.tracking, guidance=field)
        else:
            cost = PerceptionAwareCost(grid, goal, run.costs, guidance=field)

        try:
            command, diagnostics = controller.step(state, grid, goal, cost)
        except OptimizerStarvation as exc:
            logger.warning("[Episode] optimizer starved at t=%.2f: %s", t, exc)
            result.starved = True
            result.error = str(exc)
            result.duration = t
            break

        result.steps.append(_record(t, state, command, diagnostics, version))
        state = step(state, command, dt, qp)
        t_next = (tick + 1) / hz

        contact = true_collision(scene, state.p_WB, qp.collision_radius)
        result.max_penetration = max(result.max_penetration, contact.penetration)
        result.duration = t_next
        if contact.collided:
            result.termination = Termination.COLLISION
            break
        if _reached_goal(state, goal, cfg):
            result.termination = Termination.SUCCESS
            result.time_to_goal = t_next
            break

        recent.append(state.p_WB.copy())
        if len(recent) == window + 1 and np.linalg.norm(recent[-1] - recent[0]) < cfg.stuck_distance:
            logger.info("[Episode] no progress over %.1f s at t=%.2f", cfg.stuck_window, t_next)
            break

    result.render_events = renders.fired
    result.snapshot_events = snapshots.fired
    result.final_grid = snapshot_grid(voxel_map)
    logger.info(
        "[Episode] %s after %.2f s (%d ticks), max penetration %.3f m",
        result.termination.value,
        result.duration,
        tick + 1,
        result.max_penetration,
    )
    return result
