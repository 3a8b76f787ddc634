"""
Obstacle inflation and a geodesic cost-to-go over an occupancy-grid snapshot.

Occupied voxels grow by the airframe radius and a shell of the same width
lines the box faces, so a center-point lookup on the inflated grid stands in
for a sphere check. Distances to the goal are relaxed over the 26-connected
voxel graph: unknown voxels are traversable, inflated obstacles are not.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from core.mapping import OCCUPIED, OccupancyGrid, lookup, voxel_index

logger = logging.getLogger(__name__)

_OFFSETS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


def inflation_voxels(radius: float, resolution: float) -> int:
    """Voxels of clearance so that a sphere centered anywhere in a free voxel stays off obstacles."""
    if radius < 0:
        raise ValueError("inflation radius must be non-negative")
    return int(math.ceil(radius / resolution - 1e-9))


def _dilate(mask: np.ndarray, n: int) -> np.ndarray:
    """Cube dilation by n voxels, one axis at a time."""
    out = mask.copy()
    for axis in range(3):
        grown = out.copy()
        for k in range(1, n + 1):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(0, -k)
            hi[axis] = slice(k, None)
            grown[tuple(hi)] |= out[tuple(lo)]
            grown[tuple(lo)] |= out[tuple(hi)]
        out = grown
    return out


def _shell(dims: Tuple[int, int, int], n: int) -> np.ndarray:
    mask = np.zeros(dims, dtype=bool)
    if n <= 0:
        return mask
    for axis in range(3):
        head = [slice(None)] * 3
        tail = [slice(None)] * 3
        head[axis] = slice(0, n)
        tail[axis] = slice(-n, None)
        mask[tuple(head)] = True
        mask[tuple(tail)] = True
    return mask


def inflate_grid(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Occupied voxels dilated by radius plus a boundary shell; free and unknown voxels keep their state otherwise."""
    n = inflation_voxels(radius, grid.resolution)
    blocked = _dilate(grid.values == OCCUPIED, n) | _shell(grid.dims, n)
    values = np.where(blocked, OCCUPIED, grid.values).astype(np.int8)
    return OccupancyGrid(grid.origin, grid.dims, grid.resolution, values, grid.version)


def _relax(dist: np.ndarray, passable: np.ndarray, step_cost: np.ndarray) -> np.ndarray:
    """Bellman-Ford over the 26-neighbourhood; only passable voxels take new values."""
    nx, ny, nz = dist.shape
    padded = np.pad(dist, 1, constant_values=np.inf)
    for _ in range(dist.size):
        best = padded[1:-1, 1:-1, 1:-1]
        for (dx, dy, dz), w in zip(_OFFSETS, step_cost):
            shifted = padded[1 + dx : 1 + dx + nx, 1 + dy : 1 + dy + ny, 1 + dz : 1 + dz + nz]
            best = np.minimum(best, shifted + w)
        best = np.where(passable, best, padded[1:-1, 1:-1, 1:-1])
        if np.array_equal(best, padded[1:-1, 1:-1, 1:-1]):
            break
        padded[1:-1, 1:-1, 1:-1] = best
    return padded[1:-1, 1:-1, 1:-1].copy()


def voxel_centers(grid: OccupancyGrid) -> np.ndarray:
    axes = [grid.origin[k] + (np.arange(grid.dims[k]) + 0.5) * grid.resolution for k in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class GuidanceField:
    """Inflated grid plus the geodesic-minus-straight-line offset of every voxel."""

    grid: OccupancyGrid
    goal: np.ndarray
    offset: np.ndarray
    reachable: np.ndarray

    def _index(self, p) -> Tuple[np.ndarray, np.ndarray]:
        idx = voxel_index(self.grid.origin, self.grid.resolution, p)
        dims = np.asarray(self.grid.dims)
        inside = np.all((idx >= 0) & (idx < dims), axis=-1)
        return np.clip(idx, 0, dims - 1), inside

    def cost_to_go(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        idx, _ = self._index(p)
        offset = self.offset[idx[..., 0], idx[..., 1], idx[..., 2]]
        return offset + np.linalg.norm(p - self.goal, axis=-1)

    def blocked(self, p) -> np.ndarray:
        """True inside an inflated obstacle or outside the grid."""
        _, inside = self._index(p)
        return (lookup(self.grid, p) == OCCUPIED) | ~inside

    def is_reachable(self, p) -> bool:
        idx, inside = self._index(p)
        return bool(inside and self.reachable[tuple(idx)])


def build_guidance(grid: OccupancyGrid, goal, radius: float) -> GuidanceField:
    """
    Geodesic distance to the goal around inflated obstacles. Voxels the goal
    cannot reach without crossing an obstacle get the shortest distance
    through it instead, so every voxel keeps a usable gradient.
    """
    return _solve(grid, inflate_grid(grid, radius), goal)


def _solve(grid: OccupancyGrid, inflated: OccupancyGrid, goal) -> GuidanceField:
    goal = np.asarray(goal, dtype=np.float64)
    blocked = inflated.values == OCCUPIED
    res = grid.resolution

    centers = voxel_centers(grid)
    euclid = np.linalg.norm(centers - goal, axis=-1)
    goal_idx = np.clip(voxel_index(grid.origin, res, goal), 0, np.asarray(grid.dims) - 1)
    near = np.zeros(grid.dims, dtype=bool)
    near[tuple(slice(max(i - 1, 0), i + 2) for i in goal_idx)] = True

    dist = np.where(near, euclid, np.inf)
    step_cost = np.array([res * math.sqrt(abs(dx) + abs(dy) + abs(dz)) for dx, dy, dz in _OFFSETS])
    dist = _relax(dist, ~blocked & ~near, step_cost)
    reachable = np.isfinite(dist)
    dist = _relax(dist, ~reachable, step_cost)

    finite = np.isfinite(dist)
    if not np.all(finite):
        dist = np.where(finite, dist, np.max(dist[finite], initial=0.0) + res)
    logger.debug(
        "[Guidance] field for goal %s: %d blocked, %d reachable voxels",
        np.round(goal, 3).tolist(),
        int(blocked.sum()),
        int(reachable.sum()),
    )
    return GuidanceField(grid=inflated, goal=goal, offset=dist - euclid, reachable=reachable)


class GuidanceCache:
    """Rebuilds the distance field only when the blocked voxels or the goal change."""

    def __init__(self, radius: float):
        self.radius = radius
        self.builds = 0
        self._key: Optional[Tuple[bytes, Tuple[float, ...]]] = None
        self._field: Optional[GuidanceField] = None

    def field_for(self, grid: OccupancyGrid, goal) -> GuidanceField:
        inflated = inflate_grid(grid, self.radius)
        key = (np.packbits(inflated.values == OCCUPIED).tobytes(), tuple(np.asarray(goal, dtype=np.float64).tolist()))
        if self._field is None or key != self._key:
            self._field = _solve(grid, inflated, goal)
            self._key = key
            self.builds += 1
            return self._field
        return replace(self._field, grid=inflated)
