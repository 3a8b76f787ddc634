"""
Synthetic scenes, analytic depth rendering and ground-truth collision checks.

Scenes live in the 4 x 4 x 2 m box the mapper covers. Start sits at
(0.5, 2.0, 1.0) facing +x and the goal is 3 m further along +x; obstacles
are full-height walls between the two.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple, Union

import numpy as np
import yaml

from core.dynamics import rotate

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]

SCENE_FAMILIES = ("empty", "cwall", "hole", "fourwall")

BOUNDS_LOWER: Vec3 = (0.0, 0.0, 0.0)
BOUNDS_UPPER: Vec3 = (4.0, 4.0, 2.0)
START_POSITION: Vec3 = (0.5, 2.0, 1.0)
GOAL_POSITION: Vec3 = (3.5, 2.0, 1.0)
WALL_X = 2.0
WALL_THICKNESS = 0.1
CWALL_SIDE_DEPTH = 0.5
FOURWALL_X = (1.2, 1.6, 2.4, 2.8)

NO_RETURN = np.inf
_HIT_EPS = 1e-9


class SceneConstructionError(ValueError):
    """Raised when a scene spec cannot produce valid geometry."""


@dataclass(frozen=True)
class Box:
    center: Vec3
    half_extents: Vec3

    def __post_init__(self) -> None:
        if min(self.half_extents) <= 0:
            raise SceneConstructionError(f"box half-extents must be positive: {self.half_extents}")


@dataclass(frozen=True)
class HoledWall:
    """Wall slab facing +x with a circular aperture through it."""

    center: Vec3
    half_extents: Vec3
    hole_center: Tuple[float, float]
    hole_diameter: float

    def __post_init__(self) -> None:
        if min(self.half_extents) <= 0:
            raise SceneConstructionError(f"wall half-extents must be positive: {self.half_extents}")
        min_extent = 2.0 * min(self.half_extents[1], self.half_extents[2])
        if not 0 < self.hole_diameter < min_extent:
            raise SceneConstructionError(
                f"hole diameter {self.hole_diameter} m must be below the wall extent {min_extent} m"
            )


ObstaclePrimitive = Union[Box, HoledWall]


@dataclass(frozen=True)
class Bounds:
    lower: Vec3 = BOUNDS_LOWER
    upper: Vec3 = BOUNDS_UPPER

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))


@dataclass(frozen=True)
class SceneSpec:
    family: str = "empty"
    size: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class Scene:
    obstacles: Tuple[ObstaclePrimitive, ...] = ()
    bounds: Bounds = field(default_factory=Bounds)
    start_position: Vec3 = START_POSITION
    start_yaw: float = 0.0
    goal_position: Vec3 = GOAL_POSITION
    goal_yaw: float = 0.0


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 320
    height: int = 240
    fx: float = 160.0
    fy: float = 160.0
    cx: float = 160.0
    cy: float = 120.0
    max_range: float = 5.0

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float, max_range: float) -> "CameraIntrinsics":
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(width, height, f, f, width / 2.0, height / 2.0, max_range)

    def body_rays(self) -> np.ndarray:
        """Per-pixel ray directions in the body frame, x component 1, shape (height, width, 3)."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        return np.stack(
            [np.ones_like(uu), (uu - self.cx) / self.fx, (vv - self.cy) / self.fy], axis=-1
        )


@dataclass
class DepthImage:
    intrinsics: CameraIntrinsics
    depths: np.ndarray  # (height, width), NO_RETURN where nothing was hit in range

    def returns(self) -> np.ndarray:
        return np.isfinite(self.depths)


class Contact(NamedTuple):
    collided: bool
    penetration: float


def hole_location(seed: int, diameter: float) -> Tuple[float, float]:
    """Seeded aperture center keeping at least one radius between rim and wall edge."""
    rng = np.random.default_rng(seed)
    r = diameter / 2.0
    coords = []
    for lo, hi in ((BOUNDS_LOWER[1], BOUNDS_UPPER[1]), (BOUNDS_LOWER[2], BOUNDS_UPPER[2])):
        margin = min(r, (hi - lo - diameter) / 2.0)
        coords.append(float(rng.uniform(lo + r + margin, hi - r - margin)))
    return coords[0], coords[1]


def _full_height_wall(x: float, y_center: float, width: float) -> Box:
    z_mid = (BOUNDS_LOWER[2] + BOUNDS_UPPER[2]) / 2.0
    z_half = (BOUNDS_UPPER[2] - BOUNDS_LOWER[2]) / 2.0
    return Box(center=(x, y_center, z_mid), half_extents=(WALL_THICKNESS / 2.0, width / 2.0, z_half))


def build_scene(spec: SceneSpec, collision_radius: float = 0.15) -> Scene:
    """Builds one of the synthetic layouts; deterministic given the seed."""
    size = float(spec.size)
    if spec.family != "empty" and size <= 0:
        raise SceneConstructionError(f"scene size must be positive, got {size}")

    y_mid = START_POSITION[1]
    obstacles: List[ObstaclePrimitive] = []

    if spec.family == "empty":
        pass
    elif spec.family == "cwall":
        back = _full_height_wall(WALL_X, y_mid, size)
        obstacles.append(back)
        # side panels open toward the start
        side_x = WALL_X - CWALL_SIDE_DEPTH / 2.0
        for sign in (1.0, -1.0):
            obstacles.append(
                Box(
                    center=(side_x, y_mid + sign * size / 2.0, back.center[2]),
                    half_extents=(CWALL_SIDE_DEPTH / 2.0, WALL_THICKNESS / 2.0, back.half_extents[2]),
                )
            )
    elif spec.family == "hole":
        z_mid = (BOUNDS_LOWER[2] + BOUNDS_UPPER[2]) / 2.0
        half = (
            WALL_THICKNESS / 2.0,
            (BOUNDS_UPPER[1] - BOUNDS_LOWER[1]) / 2.0,
            (BOUNDS_UPPER[2] - BOUNDS_LOWER[2]) / 2.0,
        )
        if size >= 2.0 * min(half[1], half[2]):
            raise SceneConstructionError(f"hole diameter {size} m does not fit in the wall")
        obstacles.append(
            HoledWall(
                center=(WALL_X, y_mid, z_mid),
                half_extents=half,
                hole_center=hole_location(spec.seed, size),
                hole_diameter=size,
            )
        )
    elif spec.family == "fourwall":
        for index, x in enumerate(FOURWALL_X):
            sign = 1.0 if index % 2 == 0 else -1.0
            obstacles.append(_full_height_wall(x, y_mid + sign * size / 2.0, size))
    else:
        raise SceneConstructionError(f"unknown scene family '{spec.family}'")

    scene = Scene(obstacles=tuple(obstacles))
    for label, point in (("start", scene.start_position), ("goal", scene.goal_position)):
        if true_collision(scene, point, collision_radius).collided:
            raise SceneConstructionError(f"{label} pose collides with the {spec.family} layout")

    logger.debug("[World] built %s scene size=%.2f seed=%d (%d primitives)", spec.family, size, spec.seed, len(obstacles))
    return scene


def _slab(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Entry/exit ray parameters against an axis-aligned box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    parallel = dirs == 0.0
    inside = (origin >= lo) & (origin <= hi)
    t_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    return t_lo.max(axis=-1), t_hi.min(axis=-1)


def _box_bounds(center, half) -> Tuple[np.ndarray, np.ndarray]:
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(half, dtype=np.float64)
    return c - h, c + h


def _intersect_box(box: Box, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    lo, hi = _box_bounds(box.center, box.half_extents)
    t_near, t_far = _slab(origin, dirs, lo, hi)
    hit = (t_near <= t_far) & (t_near > _HIT_EPS)
    return np.where(hit, t_near, np.inf)


def _intersect_holed_wall(wall: HoledWall, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    lo, hi = _box_bounds(wall.center, wall.half_extents)
    t_near, t_far = _slab(origin, dirs, lo, hi)
    crosses = (t_near <= t_far) & (t_far > _HIT_EPS)

    r = wall.hole_diameter / 2.0
    oy = origin[..., 1] - wall.hole_center[0]
    oz = origin[..., 2] - wall.hole_center[1]
    dy, dz = dirs[..., 1], dirs[..., 2]

    t_start = np.maximum(t_near, 0.0)
    rho_sq = (oy + t_start * dy) ** 2 + (oz + t_start * dz) ** 2
    in_hole = rho_sq < r * r

    # Leaving the aperture cylinder: larger root of |o + t d - c|^2 = r^2 in y/z.
    a = dy * dy + dz * dz
    b = 2.0 * (oy * dy + oz * dz)
    cc = oy * oy + oz * oz - r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        t_exit = (-b + np.sqrt(np.maximum(b * b - 4.0 * a * cc, 0.0))) / (2.0 * a)
    t_exit = np.where(a > 0.0, t_exit, np.inf)

    face_hit = crosses & (t_near > _HIT_EPS) & ~in_hole
    rim_hit = crosses & in_hole & (t_exit < t_far) & (t_exit > _HIT_EPS)
    return np.where(face_hit, t_near, np.where(rim_hit, t_exit, np.inf))


def _intersect(primitive: ObstaclePrimitive, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    if isinstance(primitive, HoledWall):
        return _intersect_holed_wall(primitive, origin, dirs)
    return _intersect_box(primitive, origin, dirs)


def render_depth(
    scene: Scene,
    camera_position,
    camera_q,
    intr: CameraIntrinsics,
) -> DepthImage:
    """
    Casts one ray per pixel. The body-frame ray has unit x component, so the
    ray parameter at a hit is already the z-depth along the principal axis.
    """
    origin = np.asarray(camera_position, dtype=np.float64)
    q = np.asarray(camera_q, dtype=np.float64)
    dirs = rotate(q, intr.body_rays())

    depth = np.full((intr.height, intr.width), np.inf)
    for primitive in scene.obstacles:
        depth = np.minimum(depth, _intersect(primitive, origin, dirs))

    depth = np.where(depth <= intr.max_range, depth, NO_RETURN)
    return DepthImage(intrinsics=intr, depths=depth)


def _sdf_box(box: Box, p: np.ndarray) -> np.ndarray:
    q = np.abs(p - np.asarray(box.center)) - np.asarray(box.half_extents)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def _sdf_holed_wall(wall: HoledWall, p: np.ndarray) -> np.ndarray:
    c = np.asarray(wall.center)
    h = np.asarray(wall.half_extents)
    dx = np.abs(p[..., 0] - c[0]) - h[0]
    qy = np.abs(p[..., 1] - c[1]) - h[1]
    qz = np.abs(p[..., 2] - c[2]) - h[2]
    rho = np.hypot(p[..., 1] - wall.hole_center[0], p[..., 2] - wall.hole_center[1])
    hole_gap = wall.hole_diameter / 2.0 - rho

    in_rect = (qy <= 0.0) & (qz <= 0.0)
    e_x = np.maximum(dx, 0.0)
    e_yz = np.where(in_rect, np.maximum(hole_gap, 0.0), np.hypot(np.maximum(qy, 0.0), np.maximum(qz, 0.0)))
    outside = np.hypot(e_x, e_yz)
    depth_inside = np.maximum(np.maximum(dx, qy), np.maximum(qz, hole_gap))
    return np.where((e_x > 0.0) | (e_yz > 0.0), outside, depth_inside)


def signed_distance(scene: Scene, p) -> np.ndarray:
    """Distance to the nearest obstacle surface, negative inside; +inf for an empty scene."""
    p = np.asarray(p, dtype=np.float64)
    sd = np.full(p.shape[:-1], np.inf)
    for primitive in scene.obstacles:
        if isinstance(primitive, HoledWall):
            sd = np.minimum(sd, _sdf_holed_wall(primitive, p))
        else:
            sd = np.minimum(sd, _sdf_box(primitive, p))
    return sd


def true_collision(scene: Scene, p, radius: float) -> Contact:
    """Sphere (p, radius) against the real geometry and the scene bounds."""
    p = np.asarray(p, dtype=np.float64)
    sd = float(signed_distance(scene, p))
    lower = np.asarray(scene.bounds.lower)
    upper = np.asarray(scene.bounds.upper)
    overshoot = float(max(np.max(lower - (p - radius)), np.max((p + radius) - upper)))

    collided = sd < radius or overshoot > 0.0
    penetration = max(radius - sd, overshoot, 0.0) if collided else 0.0
    return Contact(collided=collided, penetration=penetration)


def _primitive_record(primitive: ObstaclePrimitive) -> dict:
    if isinstance(primitive, HoledWall):
        return {
            "type": "holed_wall",
            "center": list(primitive.center),
            "half_extents": list(primitive.half_extents),
            "hole_center": list(primitive.hole_center),
            "hole_diameter": primitive.hole_diameter,
        }
    return {"type": "box", "center": list(primitive.center), "half_extents": list(primitive.half_extents)}


def export_scene(scene: Scene) -> str:
    """YAML listing of the primitives plus bounds, start and goal, for plotting."""
    payload = {
        "bounds": {"lower": list(scene.bounds.lower), "upper": list(scene.bounds.upper)},
        "start": {"position": list(scene.start_position), "yaw": scene.start_yaw},
        "goal": {"position": list(scene.goal_position), "yaw": scene.goal_yaw},
        "obstacles": [_primitive_record(p) for p in scene.obstacles],
    }
    return yaml.safe_dump(payload, sort_keys=False)

