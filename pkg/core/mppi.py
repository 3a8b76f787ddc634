"""
Model predictive path integral optimizer over collective-thrust/body-rate commands.

Samples are nominal + Gaussian noise clipped to the actuator envelope; every
sample is rolled out through dynamics.step at dt_pred and scored by a cost
stack; the plan becomes the exponentially weighted average of the samples.
Rollouts can be split over a thread pool; each sample's cost only depends on
its own row, so results do not change with the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from core.costs import CostBreakdown, CostParams, GoalPose, PerceptionAwareCost
from core.dynamics import ControlCommand, QuadParams, QuadState, hover_command, step
from core.mapping import OccupancyGrid

logger = logging.getLogger(__name__)

SENTINEL_COST = 1e9


class OptimizerStarvation(RuntimeError):
    """Every rollout in the batch ended at the sentinel cost."""


@dataclass(frozen=True)
class MppiConfig:
    samples: int = 10000
    horizon: int = 15
    temperature: float = 0.05
    dt_pred: float = 0.1
    dt_ctrl: float = 0.02
    sigma: Tuple[float, float, float, float] = (0.2, 0.3, 0.3, 0.2)
    rng_seed: int = 0
    workers: int = 1
    rollout_substeps: int = 1
    rate_limit: Tuple[float, float, float] = (6.0, 6.0, 3.0)
    keep_nominal: bool = True
    rollout_rate_gain: Optional[float] = None
    full_diagnostics: bool = False

    def __post_init__(self) -> None:
        if self.samples < 1 or self.horizon < 1:
            raise ValueError("samples and horizon must be at least 1")
        if self.temperature <= 0:
            raise ValueError("temperature (lambda) must be positive")
        if not self.dt_pred >= self.dt_ctrl > 0:
            raise ValueError("need dt_pred >= dt_ctrl > 0")
        if len(self.sigma) != 4 or min(self.sigma) < 0:
            raise ValueError("sigma needs four non-negative entries")
        if self.workers < 1 or self.rollout_substeps < 1:
            raise ValueError("workers and rollout_substeps must be at least 1")
        if len(self.rate_limit) != 3 or min(self.rate_limit) <= 0:
            raise ValueError("rate_limit needs three positive entries")
        if self.rollout_rate_gain is not None and self.rollout_rate_gain <= 0:
            raise ValueError("rollout_rate_gain must be positive")

    @property
    def sigma_vector(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=np.float64)

    def rollout_params(self, qp: QuadParams) -> QuadParams:
        """Plant model for prediction; by default the rate loop settles within one substep."""
        gain = self.rollout_rate_gain or self.rollout_substeps / self.dt_pred
        return replace(qp, k_rate=gain)


@dataclass
class ControlSequence:
    commands: np.ndarray  # (H, 4) rows of (c, wx, wy, wz), dt_pred apart

    def __post_init__(self) -> None:
        self.commands = np.asarray(self.commands, dtype=np.float64)
        if self.commands.ndim != 2 or self.commands.shape[1] != 4:
            raise ValueError(f"expected an (H, 4) command array, got {self.commands.shape}")
        if not np.all(np.isfinite(self.commands)):
            raise ValueError("control sequence contains non-finite entries")

    @classmethod
    def hover(cls, horizon: int, params: QuadParams) -> "ControlSequence":
        u = hover_command(params).as_vector()
        return cls(np.tile(u, (horizon, 1)))

    def __len__(self) -> int:
        return self.commands.shape[0]

    def first(self) -> ControlCommand:
        return ControlCommand.from_vector(self.commands[0].copy())


@dataclass
class RolloutOutcome:
    total_cost: float
    states: Optional[np.ndarray] = None  # (H + 1, 13) when traced
    stage_costs: Optional[np.ndarray] = None  # (H,) when traced


@dataclass
class StepDiagnostics:
    L_min: float
    ess: float
    mean_cost: float
    updated_cost: Optional[float] = None
    breakdown: dict = field(default_factory=dict)


def sample_controls(nominal: ControlSequence, cfg: MppiConfig, rng: np.random.Generator) -> np.ndarray:
    """(N, H, 4) perturbed copies of the nominal; no clipping here."""
    shape = (cfg.samples,) + nominal.commands.shape
    noise = rng.standard_normal(shape) * cfg.sigma_vector
    return nominal.commands + noise


def clip_samples(samples: np.ndarray, qp: QuadParams, cfg: MppiConfig) -> np.ndarray:
    """Clamps thrust to [0, c_max] and body rates to the rate envelope."""
    limit = np.asarray(cfg.rate_limit, dtype=np.float64)
    out = np.empty_like(samples)
    out[..., 0] = np.clip(samples[..., 0], 0.0, qp.c_max)
    out[..., 1:] = np.clip(samples[..., 1:], -limit, limit)
    return out


def _broadcast_state(x0: QuadState, n: int) -> QuadState:
    return QuadState(
        p_WB=np.broadcast_to(x0.p_WB, (n, 3)).copy(),
        q_WB=np.broadcast_to(x0.q_WB, (n, 4)).copy(),
        v_WB=np.broadcast_to(x0.v_WB, (n, 3)).copy(),
        omega_B=np.broadcast_to(x0.omega_B, (n, 3)).copy(),
    )


def _replace_rows(x: QuadState, bad: np.ndarray, fallback: QuadState) -> QuadState:
    """Rows flagged in bad take the fallback state."""
    keep = ~bad[:, None]
    return QuadState(
        p_WB=np.where(keep, x.p_WB, fallback.p_WB),
        q_WB=np.where(keep, x.q_WB, fallback.q_WB),
        v_WB=np.where(keep, x.v_WB, fallback.v_WB),
        omega_B=np.where(keep, x.omega_B, fallback.omega_B),
    )


def _rollout_chunk(x0: QuadState, controls: np.ndarray, cost, u_last: np.ndarray, qp: QuadParams, cfg: MppiConfig, trace: bool = False):
    """
    Rows that touch an obstacle of the cost's contact model stay where they
    hit it for the rest of the horizon and keep paying the collision term.
    Freezing is off when x0 itself is in contact.
    """
    n, horizon, _ = controls.shape
    x = _broadcast_state(x0, n)
    parked = _broadcast_state(x0, n)
    total = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    prev = np.broadcast_to(u_last, (n, 4))
    h = cfg.dt_pred / cfg.rollout_substeps
    model = cfg.rollout_params(qp)

    contact = getattr(cost, "contact", None)
    freeze = contact is not None and not bool(np.any(contact(x0.p_WB)))
    crashed = np.zeros(n, dtype=bool)

    states = [x.to_vector()] if trace else None
    stages = [] if trace else None
    with np.errstate(all="ignore"):
        for i in range(horizon):
            u = controls[:, i]
            stage = cost.stage_terms(x, u, prev, i).total
            total = total + stage
            command = ControlCommand.from_vector(u)
            moved = x
            for _ in range(cfg.rollout_substeps):
                moved = step(moved, command, h, model, validate=False)
            if np.any(crashed):
                moved = _replace_rows(moved, crashed, x)
            x = moved
            alive &= x.is_finite()
            if not np.all(alive):
                x = _replace_rows(x, ~alive, parked)
            if freeze:
                crashed |= contact(x.p_WB)
            prev = u
            if trace:
                states.append(x.to_vector())
                stages.append(stage)
        total = total + cost.terminal(x)

    total = np.where(alive & np.isfinite(total), total, SENTINEL_COST)
    if trace:
        return total, np.stack(states, axis=1), np.stack(stages, axis=1)
    return total


def rollout_costs(x0: QuadState, controls: np.ndarray, cost, u_last, qp: QuadParams, cfg: MppiConfig) -> np.ndarray:
    """Total cost of each of the (N, H, 4) sequences, optionally spread over worker threads."""
    u_last = np.asarray(u_last.as_vector() if isinstance(u_last, ControlCommand) else u_last, dtype=np.float64)
    n = controls.shape[0]
    workers = min(cfg.workers, n)
    if workers <= 1:
        return _rollout_chunk(x0, controls, cost, u_last, qp, cfg)

    chunks = np.array_split(np.arange(n), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda rows: _rollout_chunk(x0, controls[rows], cost, u_last, qp, cfg), chunks))
    return np.concatenate(parts)


def rollout(
    x0: QuadState,
    seq: ControlSequence,
    grid: OccupancyGrid,
    goal: GoalPose,
    u_last: ControlCommand,
    prm: CostParams,
    qp: QuadParams,
    cfg: MppiConfig,
    cost=None,
    trace: bool = False,
) -> RolloutOutcome:
    """Single-sequence rollout, the same code path the batch uses."""
    cost = cost or PerceptionAwareCost(grid, goal, prm)
    controls = seq.commands[None, ...]
    u_prev = u_last.as_vector()
    if trace:
        total, states, stages = _rollout_chunk(x0, controls, cost, u_prev, qp, cfg, trace=True)
        return RolloutOutcome(total_cost=float(total[0]), states=states[0], stage_costs=stages[0])
    total = _rollout_chunk(x0, controls, cost, u_prev, qp, cfg)
    return RolloutOutcome(total_cost=float(total[0]))


def weights(costs, lam: float) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    usable = costs < SENTINEL_COST
    if not np.any(usable):
        raise OptimizerStarvation(f"all {costs.size} rollouts hit the sentinel cost")
    L_min = np.min(costs[usable])
    w = np.exp(-(costs - L_min) / lam)
    return w / np.sum(w)


def effective_sample_size(w: np.ndarray) -> float:
    return float(1.0 / np.sum(w * w))


def update(samples: np.ndarray, w: np.ndarray) -> ControlSequence:
    """Weighted average of the samples, taken as offsets from the first one."""
    samples = np.asarray(samples, dtype=np.float64)
    base = samples[0]
    return ControlSequence(base + np.tensordot(w, samples - base, axes=1))


def shift_warmstart(seq: ControlSequence, cfg: MppiConfig) -> ControlSequence:
    """Re-samples the plan dt_ctrl later on the dt_pred grid; the last command is held."""
    horizon = len(seq)
    knots = np.arange(horizon, dtype=np.float64)
    query = cfg.dt_ctrl / cfg.dt_pred + knots
    shifted = np.stack([np.interp(query, knots, seq.commands[:, ch]) for ch in range(4)], axis=-1)
    return ControlSequence(shifted)


def control_step(
    x: QuadState,
    grid: OccupancyGrid,
    goal: GoalPose,
    nominal: ControlSequence,
    u_last: ControlCommand,
    cfg: MppiConfig,
    qp: QuadParams,
    prm: CostParams,
    rng: np.random.Generator,
    cost=None,
) -> Tuple[ControlCommand, ControlSequence, StepDiagnostics]:
    """
    One optimizer iteration: sample, clip to the actuator envelope, roll out,
    weight, average, shift. With keep_nominal the first sample is the
    unperturbed warm start.
    """
    cost = cost or PerceptionAwareCost(grid, goal, prm)
    samples = sample_controls(nominal, cfg, rng)
    if cfg.keep_nominal:
        samples[0] = nominal.commands
    samples = clip_samples(samples, qp, cfg)
    costs = rollout_costs(x, samples, cost, u_last, qp, cfg)
    w = weights(costs, cfg.temperature)
    updated = update(samples, w)

    command = updated.first()
    finite = costs[costs < SENTINEL_COST]
    updated_cost = None
    if cfg.full_diagnostics:
        updated_cost = float(_rollout_chunk(x, updated.commands[None, ...], cost, u_last.as_vector(), qp, cfg)[0])
    breakdown: CostBreakdown = cost.stage_terms(x, command, u_last, 0)
    diagnostics = StepDiagnostics(
        L_min=float(np.min(finite)),
        ess=effective_sample_size(w),
        mean_cost=float(np.mean(finite)),
        updated_cost=updated_cost,
        breakdown=breakdown.as_dict(),
    )
    return command, shift_warmstart(updated, cfg), diagnostics


class MppiController:
    """Keeps the warm-started plan and the last executed command between control ticks."""

    def __init__(self, cfg: MppiConfig, qp: QuadParams, prm: CostParams, seed: Optional[int] = None):
        self.cfg = cfg
        self.qp = qp
        self.prm = prm
        self.seed = cfg.rng_seed if seed is None else seed
        self.reset()

    def reset(self) -> None:
        self.rng = np.random.default_rng(self.seed)
        self.nominal = ControlSequence.hover(self.cfg.horizon, self.qp)
        self.u_last = hover_command(self.qp)
        self.iterations = 0

    def step(self, x: QuadState, grid: OccupancyGrid, goal: GoalPose, cost=None) -> Tuple[ControlCommand, StepDiagnostics]:
        command, self.nominal, diagnostics = control_step(
            x, grid, goal, self.nominal, self.u_last, self.cfg, self.qp, self.prm, self.rng, cost=cost
        )
        self.u_last = command
        self.iterations += 1
        if self.iterations % 50 == 0:
            logger.debug(
                "[MPPI] iter %d: L_min=%.3f ess=%.1f", self.iterations, diagnostics.L_min, diagnostics.ess
            )
        return command, diagnostics
