"""
Depth frames to a three-state occupancy grid.

A VoxelMap aggregates per-voxel signed evidence (+1 per occupied hit, -1 per
free pass, saturating at +-127) plus an "observed" mask. Snapshots collapse it
to {1 occupied, 0 free, -1 unknown}; a tie in evidence counts as occupied.
The same Amanatides-Woo traversal drives free-space carving, the scalar
raycast_dda query and the batched raycast_many used by rollouts.
"""

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Iterator, List, NamedTuple, Tuple

import numpy as np

from core.dynamics import rotate
from core.world import BOUNDS_LOWER, BOUNDS_UPPER, DepthImage

logger = logging.getLogger(__name__)

OCCUPIED = 1
FREE = 0
UNKNOWN = -1

EVIDENCE_LIMIT = 127

_HEADER_DTYPE = np.dtype([("origin", "<f8", (3,)), ("dims", "<i4", (3,)), ("resolution", "<f8")])


class RayOutcome(enum.IntEnum):
    REACHED_GOAL = 0
    HIT_OCCUPIED = 1
    HIT_UNKNOWN = 2
    LEFT_BOUNDS = 3


class RayResult(NamedTuple):
    outcome: RayOutcome
    t_star: float
    voxel: Tuple[int, int, int]


@dataclass
class PointCloud:
    origin: np.ndarray
    points: np.ndarray  # occupied returns, world frame (M, 3)
    free_endpoints: np.ndarray  # no-return rays cut at max_range (K, 3)


class VoxelMap:
    """Single-writer evidence store over an axis-aligned box."""

    def __init__(self, lower=BOUNDS_LOWER, upper=BOUNDS_UPPER, resolution: float = 0.1):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.origin = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        self.resolution = float(resolution)
        extent = (self.upper - self.origin) / self.resolution
        # tolerate float noise such as 4.0 / 0.1 = 40.000000000000001
        self.dims = tuple(int(math.ceil(e - 1e-9)) for e in extent)
        self.evidence = np.zeros(self.dims, dtype=np.int8)
        self.observed = np.zeros(self.dims, dtype=bool)
        self.frames_inserted = 0

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    origin: np.ndarray
    dims: Tuple[int, int, int]
    resolution: float
    values: np.ndarray
    version: int = 0

    def __post_init__(self) -> None:
        self.values.setflags(write=False)

    @classmethod
    def filled(cls, state: int, lower=BOUNDS_LOWER, upper=BOUNDS_UPPER, resolution: float = 0.1) -> "OccupancyGrid":
        voxel_map = VoxelMap(lower, upper, resolution)
        values = np.full(voxel_map.dims, state, dtype=np.int8)
        return cls(voxel_map.origin, voxel_map.dims, voxel_map.resolution, values)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.resolution

    def with_version(self, version: int) -> "OccupancyGrid":
        return replace(self, version=version)


def voxel_index(origin: np.ndarray, resolution: float, p) -> np.ndarray:
    """Floor convention: a point on a face belongs to the cell whose lower face it lies on."""
    return np.floor((np.asarray(p, dtype=np.float64) - origin) / resolution).astype(np.int64)


def _in_bounds(idx: np.ndarray, dims) -> np.ndarray:
    return np.all((idx >= 0) & (idx < np.asarray(dims)), axis=-1)


def lookup(grid: OccupancyGrid, p) -> np.ndarray:
    """State of the voxel containing p; -1 outside the grid. Works on (..., 3) batches."""
    idx = voxel_index(grid.origin, grid.resolution, p)
    inside = _in_bounds(idx, grid.dims)
    clipped = np.clip(idx, 0, np.asarray(grid.dims) - 1)
    values = grid.values[clipped[..., 0], clipped[..., 1], clipped[..., 2]]
    return np.where(inside, values, UNKNOWN)


def coverage_fraction(grid: OccupancyGrid) -> float:
    return float(np.mean(grid.values != UNKNOWN))


def depth_to_pointcloud(img: DepthImage, camera_position, camera_q) -> PointCloud:
    """Back-projects every pixel; no-return pixels become free-ray endpoints at max_range."""
    origin = np.asarray(camera_position, dtype=np.float64)
    dirs = rotate(np.asarray(camera_q, dtype=np.float64), img.intrinsics.body_rays())
    hits = img.returns()
    points = origin + dirs[hits] * img.depths[hits][:, None]
    free_endpoints = origin + dirs[~hits] * img.intrinsics.max_range
    return PointCloud(origin=origin, points=points, free_endpoints=free_endpoints)


def traverse_voxels(origin, resolution: float, start, end) -> Iterator[Tuple[Tuple[int, int, int], float]]:
    """Yields (voxel, entry fraction) from start to end, Amanatides-Woo, unbounded grid."""
    a = (np.asarray(start, dtype=np.float64) - origin) / resolution
    b = (np.asarray(end, dtype=np.float64) - origin) / resolution
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    idx = [int(math.floor(v)) for v in a]
    last = [int(math.floor(v)) for v in b]

    step = [0, 0, 0]
    t_max = [math.inf] * 3
    t_delta = [math.inf] * 3
    for k in range(3):
        d = b[k] - a[k]
        if d > 0:
            step[k] = 1
            t_max[k] = (idx[k] + 1 - a[k]) / d
            t_delta[k] = 1.0 / d
        elif d < 0:
            step[k] = -1
            t_max[k] = (idx[k] - a[k]) / d
            t_delta[k] = -1.0 / d

    t_entry = 0.0
    while True:
        yield (idx[0], idx[1], idx[2]), t_entry
        if idx == last:
            return
        axis = min(range(3), key=lambda k: t_max[k])
        if t_max[axis] > 1.0:
            return
        t_entry = t_max[axis]
        idx[axis] += step[axis]
        t_max[axis] += t_delta[axis]


def raycast_dda(grid: OccupancyGrid, start, end) -> RayResult:
    """Walks from start toward end and stops at the first voxel that is not free."""
    voxel = (0, 0, 0)
    for voxel, t_entry in traverse_voxels(grid.origin, grid.resolution, start, end):
        if not all(0 <= voxel[k] < grid.dims[k] for k in range(3)):
            return RayResult(RayOutcome.LEFT_BOUNDS, t_entry, voxel)
        state = int(grid.values[voxel])
        if state == OCCUPIED:
            return RayResult(RayOutcome.HIT_OCCUPIED, t_entry, voxel)
        if state == UNKNOWN:
            return RayResult(RayOutcome.HIT_UNKNOWN, t_entry, voxel)
    return RayResult(RayOutcome.REACHED_GOAL, 1.0, voxel)


class _Walker:
    """Vectorized Amanatides-Woo state for many rays at once."""

    def __init__(self, origin: np.ndarray, resolution: float, starts: np.ndarray, ends: np.ndarray):
        a = (starts - origin) / resolution
        b = (ends - origin) / resolution
        b = np.broadcast_to(b, a.shape)
        d = b - a
        self.idx = np.floor(a).astype(np.int64)
        self.last = np.floor(b).astype(np.int64)
        self.step = np.sign(d).astype(np.int64)
        with np.errstate(divide="ignore", invalid="ignore"):
            boundary = self.idx + (self.step > 0)
            self.t_max = np.where(d != 0.0, (boundary - a) / d, np.inf)
            self.t_delta = np.where(d != 0.0, 1.0 / np.abs(d), np.inf)
        self.budget = int(np.max(np.abs(self.last - self.idx).sum(axis=-1), initial=0)) + 2

    def advance(self, rows: np.ndarray) -> np.ndarray:
        """Steps the given rays one voxel; returns the rays whose next crossing lies past the end."""
        t_max = self.t_max[rows]
        axis = np.argmin(t_max, axis=-1)
        t_next = t_max[np.arange(rows.size), axis]
        beyond = t_next > 1.0
        go = rows[~beyond]
        go_axis = axis[~beyond]
        self.idx[go, go_axis] += self.step[go, go_axis]
        self.t_max[go, go_axis] += self.t_delta[go, go_axis]
        return rows[beyond]


def raycast_many(grid: OccupancyGrid, starts: np.ndarray, end) -> np.ndarray:
    """Batched raycast_dda returning RayOutcome codes, ray for ray identical to the scalar walk."""
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 3)
    n = starts.shape[0]
    outcome = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return outcome

    walker = _Walker(grid.origin, grid.resolution, starts, np.asarray(end, dtype=np.float64))
    active = np.arange(n)
    dims = np.asarray(grid.dims)
    for _ in range(walker.budget):
        if active.size == 0:
            break
        idx = walker.idx[active]
        inside = np.all((idx >= 0) & (idx < dims), axis=-1)
        state = np.full(active.size, FREE, dtype=np.int64)
        state[inside] = grid.values[idx[inside, 0], idx[inside, 1], idx[inside, 2]]

        outcome[active[~inside]] = RayOutcome.LEFT_BOUNDS
        outcome[active[inside & (state == OCCUPIED)]] = RayOutcome.HIT_OCCUPIED
        outcome[active[inside & (state == UNKNOWN)]] = RayOutcome.HIT_UNKNOWN
        still = inside & (state == FREE)
        at_end = still & np.all(idx == walker.last[active], axis=-1)
        outcome[active[at_end]] = RayOutcome.REACHED_GOAL

        rows = active[still & ~at_end]
        finished = walker.advance(rows)
        outcome[finished] = RayOutcome.REACHED_GOAL
        active = rows[np.isin(rows, finished, assume_unique=True, invert=True)]

    outcome[active] = RayOutcome.REACHED_GOAL
    return outcome


def _carve(voxel_map: VoxelMap, sensor: np.ndarray, ends: np.ndarray, include_end: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Flat indices of voxels each ray passes through, and of in-bounds end voxels."""
    dims = np.asarray(voxel_map.dims)
    walker = _Walker(voxel_map.origin, voxel_map.resolution, np.broadcast_to(sensor, ends.shape), ends)
    active = np.arange(ends.shape[0])
    passed: List[np.ndarray] = []
    for _ in range(walker.budget):
        if active.size == 0:
            break
        idx = walker.idx[active]
        inside = np.all((idx >= 0) & (idx < dims), axis=-1)
        at_end = np.all(idx == walker.last[active], axis=-1)
        keep = inside & (include_end | ~at_end)
        passed.append(np.ravel_multi_index(idx[keep].T, voxel_map.dims))

        # the box is convex: a ray that left it never comes back
        rows = active[inside & ~at_end]
        finished = walker.advance(rows)
        active = rows[np.isin(rows, finished, assume_unique=True, invert=True)]

    last = walker.last
    end_inside = _in_bounds(last, voxel_map.dims)
    end_flat = np.ravel_multi_index(last[end_inside].T, voxel_map.dims)
    free = np.concatenate(passed) if passed else np.empty(0, dtype=np.int64)
    return free, end_flat


def _unique_by_voxel(voxel_map: VoxelMap, points: np.ndarray) -> np.ndarray:
    if points.shape[0] == 0:
        return points
    idx = voxel_index(voxel_map.origin, voxel_map.resolution, points)
    _, first = np.unique(idx, axis=0, return_index=True)
    return points[np.sort(first)]


def insert_pointcloud(voxel_map: VoxelMap, sensor_origin, points, free_endpoints) -> VoxelMap:
    """
    Occupied returns carve free space up to (not including) their voxel and
    mark that voxel occupied; no-return rays carve all the way. Each voxel
    changes by at most one count per frame, occupied winning within a frame.
    """
    sensor = np.asarray(sensor_origin, dtype=np.float64)
    points = _unique_by_voxel(voxel_map, np.asarray(points, dtype=np.float64).reshape(-1, 3))
    free_endpoints = _unique_by_voxel(voxel_map, np.asarray(free_endpoints, dtype=np.float64).reshape(-1, 3))

    free_hit, occupied = _carve(voxel_map, sensor, points, include_end=False)
    free_miss, _ = _carve(voxel_map, sensor, free_endpoints, include_end=True)

    occupied = np.unique(occupied)
    free = np.setdiff1d(np.concatenate([free_hit, free_miss]), occupied)

    evidence = voxel_map.evidence.reshape(-1)
    observed = voxel_map.observed.reshape(-1)
    evidence[free] = np.maximum(evidence[free].astype(np.int16) - 1, -EVIDENCE_LIMIT).astype(np.int8)
    evidence[occupied] = np.minimum(evidence[occupied].astype(np.int16) + 1, EVIDENCE_LIMIT).astype(np.int8)
    observed[free] = True
    observed[occupied] = True
    voxel_map.frames_inserted += 1

    logger.debug(
        "[Mapper] frame %d: %d returns, %d open rays, %d free / %d occupied updates",
        voxel_map.frames_inserted,
        points.shape[0],
        free_endpoints.shape[0],
        free.size,
        occupied.size,
    )
    return voxel_map


def insert_cloud(voxel_map: VoxelMap, cloud: PointCloud) -> VoxelMap:
    return insert_pointcloud(voxel_map, cloud.origin, cloud.points, cloud.free_endpoints)


def snapshot_grid(voxel_map: VoxelMap, version: int = 0) -> OccupancyGrid:
    """Collapses evidence into a new read-only three-state grid."""
    values = np.where(
        voxel_map.observed,
        np.where(voxel_map.evidence >= 0, OCCUPIED, FREE),
        UNKNOWN,
    ).astype(np.int8)
    return OccupancyGrid(
        origin=voxel_map.origin.copy(),
        dims=voxel_map.dims,
        resolution=voxel_map.resolution,
        values=values,
        version=version,
    )


def grid_to_bytes(grid: OccupancyGrid) -> bytes:
    """Little-endian header (origin f8x3, dims i4x3, resolution f8) then int8 payload, x slowest."""
    header = np.zeros(1, dtype=_HEADER_DTYPE)
    header["origin"] = grid.origin
    header["dims"] = grid.dims
    header["resolution"] = grid.resolution
    return header.tobytes() + np.ascontiguousarray(grid.values, dtype=np.int8).tobytes()


def grid_from_bytes(data: bytes) -> OccupancyGrid:
    size = _HEADER_DTYPE.itemsize
    if len(data) < size:
        raise ValueError("grid file is shorter than its header")
    header = np.frombuffer(data[:size], dtype=_HEADER_DTYPE)[0]
    dims = tuple(int(v) for v in header["dims"])
    payload = np.frombuffer(data[size:], dtype=np.int8)
    if payload.size != int(np.prod(dims)):
        raise ValueError(f"grid payload has {payload.size} voxels, header expects {int(np.prod(dims))}")
    return OccupancyGrid(
        origin=np.array(header["origin"], dtype=np.float64),
        dims=dims,
        resolution=float(header["resolution"]),
        values=payload.reshape(dims).copy(),
    )


def format_slice(grid: OccupancyGrid, z: float) -> str:
    """Top-down text dump of one z layer: '#' occupied, '.' free, '?' unknown; +y at the top."""
    k = int(math.floor((z - grid.origin[2]) / grid.resolution))
    k = min(max(k, 0), grid.dims[2] - 1)
    glyphs = {OCCUPIED: "#", FREE: ".", UNKNOWN: "?"}
    layer = grid.values[:, :, k]
    rows = []
    for j in reversed(range(grid.dims[1])):
        rows.append("".join(glyphs[int(v)] for v in layer[:, j]))
    return "\n".join(rows)
