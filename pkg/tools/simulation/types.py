import enum
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from core.mapping import OccupancyGrid
from core.reference import ReferenceTrajectory
from core.world import SceneSpec

CONTROLLERS = ("pa-mppi", "tracking-mppi")
OBSERVATION_MODES = ("none", "yaw-sweep")

Summary = Dict[str, Any]


class Termination(str, enum.Enum):
    SUCCESS = "Success"
    STUCK = "Stuck"
    COLLISION = "Collision"

    @property
    def exit_code(self) -> int:
        return {"Success": 0, "Stuck": 2, "Collision": 3}[self.value]


@dataclass(frozen=True)
class EpisodeConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    controller: str = "pa-mppi"
    timeout: float = 30.0
    goal_pos_tol: float = 0.2
    goal_yaw_tol: float = 0.26
    goal_speed_tol: float = 0.1
    stuck_window: float = 5.0
    stuck_distance: float = 0.1
    init_observation: str = "yaw-sweep"
    sweep_duration: float = 2.0
    render_hz: int = 30
    snapshot_hz: int = 10
    seed: int = 0
    guidance: bool = True

    def __post_init__(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got '{self.controller}'")
        if self.init_observation not in OBSERVATION_MODES:
            raise ValueError(f"init_observation must be one of {OBSERVATION_MODES}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if min(self.goal_pos_tol, self.goal_yaw_tol, self.goal_speed_tol) <= 0:
            raise ValueError("goal tolerances must be positive")
        if self.stuck_window <= 0 or self.stuck_distance < 0:
            raise ValueError("stuck window must be positive")
        if self.render_hz < 1 or self.snapshot_hz < 1:
            raise ValueError("render_hz and snapshot_hz must be at least 1")
        if self.sweep_duration < 0:
            raise ValueError("sweep_duration must be non-negative")


@dataclass
class StepRecord:
    t: float
    p: List[float]
    q: List[float]
    v: List[float]
    omega: List[float]
    command: List[float]
    costs: Dict[str, float]
    L_min: float
    ESS: float
    snapshot_version: int

    def to_dict(self) -> Summary:
        return {
            "t": self.t,
            "p": self.p,
            "q": self.q,
            "v": self.v,
            "omega": self.omega,
            "command": self.command,
            "costs": self.costs,
            "L_min": self.L_min,
            "ESS": self.ESS,
            "snapshot_version": self.snapshot_version,
        }


@dataclass
class EpisodeResult:
    config: EpisodeConfig
    termination: Termination
    duration: float = 0.0
    time_to_goal: Optional[float] = None
    steps: List[StepRecord] = field(default_factory=list)
    max_penetration: float = 0.0
    coverage: List[Tuple[float, float]] = field(default_factory=list)
    render_events: int = 0
    snapshot_events: int = 0
    starved: bool = False
    error: Optional[str] = None
    final_grid: Optional[OccupancyGrid] = None
    reference: Optional[ReferenceTrajectory] = None

    def summary(self) -> Summary:
        final_coverage = self.coverage[-1][1] if self.coverage else 0.0
        return {
            "controller": self.config.controller,
            "family": self.config.scene.family,
            "size": self.config.scene.size,
            "scene_seed": self.config.scene.seed,
            "seed": self.config.seed,
            "termination": self.termination.value,
            "time_to_goal_s": self.time_to_goal,
            "duration_s": self.duration,
            "max_penetration_m": self.max_penetration,
            "final_coverage": final_coverage,
            "control_steps": len(self.steps),
            "starved": self.starved,
            "error": self.error,
        }


@dataclass(frozen=True)
class BatchCell:
    family: str = "cwall"
    sizes: Tuple[float, ...] = (1.0,)
    repeats: int = 5
    scene_seeds: Tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not self.scene_seeds:
            raise ValueError("scene_seeds must not be empty")


@dataclass(frozen=True)
class BatchConfig:
    label: str = "batch"
    controllers: Tuple[str, ...] = CONTROLLERS
    cells: Tuple[BatchCell, ...] = ()

    def __post_init__(self) -> None:
        for name in self.controllers:
            if name not in CONTROLLERS:
                raise ValueError(f"unknown controller '{name}'")


@dataclass
class SummaryRow:
    controller: str
    family: str
    size: float
    repeats: int
    success_pct: float
    stuck_pct: float
    collision_pct: float
    mean_time_to_goal_s: float
    mean_penetration_m: float

    @classmethod
    def from_results(cls, results: List[EpisodeResult]) -> "SummaryRow":
        first = results[0].config
        n = len(results)

        def pct(label: Termination) -> float:
            return 100.0 * sum(r.termination == label for r in results) / n

        times = [r.time_to_goal for r in results if r.time_to_goal is not None]
        return cls(
            controller=first.controller,
            family=first.scene.family,
            size=first.scene.size,
            repeats=n,
            success_pct=pct(Termination.SUCCESS),
            stuck_pct=pct(Termination.STUCK),
            collision_pct=pct(Termination.COLLISION),
            mean_time_to_goal_s=sum(times) / len(times) if times else math.nan,
            mean_penetration_m=sum(r.max_penetration for r in results) / n,
        )
