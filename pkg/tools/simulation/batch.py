import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple

from core.world import SceneSpec

from .orchestrator import run_episode
from .types import BatchConfig, EpisodeConfig, EpisodeResult, SummaryRow, Termination

if TYPE_CHECKING:
    from tools.config import RunConfig

logger = logging.getLogger(__name__)

RowKey = Tuple[str, str, float]


def expand_batch(batch: BatchConfig, base: EpisodeConfig) -> List[EpisodeConfig]:
    """Every (controller, family, size, scene seed, repeat); controller seeds count up from base.seed per cell."""
    episodes: List[EpisodeConfig] = []
    for controller in batch.controllers:
        for cell in batch.cells:
            for size in cell.sizes:
                index = 0
                for scene_seed in cell.scene_seeds:
                    for _ in range(cell.repeats):
                        episodes.append(
                            replace(
                                base,
                                controller=controller,
                                scene=SceneSpec(family=cell.family, size=size, seed=scene_seed),
                                seed=base.seed + index,
                            )
                        )
                        index += 1
    return episodes


def _safe_run(cfg: EpisodeConfig, run: Optional["RunConfig"]) -> EpisodeResult:
    try:
        return run_episode(cfg, run)
    except Exception as exc:
        logger.error("[Batch] %s %s:%.2f failed: %s", cfg.controller, cfg.scene.family, cfg.scene.size, exc)
        return EpisodeResult(config=cfg, termination=Termination.STUCK, error=f"{type(exc).__name__}: {exc}")


def summarize(results: Sequence[EpisodeResult]) -> List[SummaryRow]:
    groups: Dict[RowKey, List[EpisodeResult]] = {}
    for result in results:
        key = (result.config.controller, result.config.scene.family, result.config.scene.size)
        groups.setdefault(key, []).append(result)
    return [SummaryRow.from_results(group) for group in groups.values()]


def run_batch(
    episodes: Sequence[EpisodeConfig],
    run: Optional["RunConfig"] = None,
    jobs: int = 1,
    on_result: Optional[Callable[[int, EpisodeResult], None]] = None,
) -> Tuple[List[SummaryRow], List[EpisodeResult]]:
    """
    Runs the episodes (concurrently up to `jobs`) and aggregates one row per
    (controller, family, size) in first-seen order. Results come back in input
    order whatever the job count, and a failing episode never stops the batch.
    """
    if not episodes:
        return [], []

    logger.info("[Batch] %d episodes on %d job(s)", len(episodes), jobs)
    results: List[Optional[EpisodeResult]] = [None] * len(episodes)

    def work(index: int) -> None:
        result = _safe_run(episodes[index], run)
        results[index] = result
        if on_result is not None:
            try:
                on_result(index, result)
            except Exception as exc:
                logger.error("[Batch] result hook failed for episode %d: %s", index, exc)

    if jobs <= 1:
        for index in range(len(episodes)):
            work(index)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(len(episodes))))

    finished = [r for r in results if r is not None]
    return summarize(finished), finished
