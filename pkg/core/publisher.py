import logging
import threading
from dataclasses import dataclass
from typing import Optional, Tuple

from core.mapping import OccupancyGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Published:
    version: int
    grid: OccupancyGrid


class GridPublisher:
    """
    Holds the latest occupancy snapshot. Writers swap in a whole new grid
    under the lock; readers get a (version, grid) pair that always belongs
    together, never a half-written map.
    """

    def __init__(self, initial: Optional[OccupancyGrid] = None):
        self._lock = threading.Lock()
        self._current: Optional[_Published] = None
        if initial is not None:
            self.publish(initial)

    def publish(self, grid: OccupancyGrid) -> int:
        with self._lock:
            version = 1 if self._current is None else self._current.version + 1
            self._current = _Published(version=version, grid=grid.with_version(version))
        logger.debug("[Publisher] snapshot v%d published", version)
        return version

    def latest(self) -> Tuple[int, OccupancyGrid]:
        with self._lock:
            current = self._current
        if current is None:
            raise LookupError("no occupancy snapshot has been published yet")
        return current.version, current.grid

    @property
    def version(self) -> int:
        with self._lock:
            return 0 if self._current is None else self._current.version
