import logging
import math

import numpy as np

from core.dynamics import QuadState, quat_from_yaw
from core.mapping import VoxelMap, depth_to_pointcloud, insert_cloud
from core.world import CameraIntrinsics, Scene, render_depth

logger = logging.getLogger(__name__)


def observe(scene: Scene, voxel_map: VoxelMap, position, q, intr: CameraIntrinsics) -> None:
    img = render_depth(scene, position, q, intr)
    insert_cloud(voxel_map, depth_to_pointcloud(img, position, q))


def init_observation(
    mode: str,
    scene: Scene,
    state: QuadState,
    voxel_map: VoxelMap,
    intr: CameraIntrinsics,
    render_hz: int = 30,
    sweep_duration: float = 2.0,
) -> VoxelMap:
    """
    Seeds the map before the optimizer takes over. "yaw-sweep" turns the
    camera from -90 to +90 degrees around the start yaw, one frame per render
    tick; "none" inserts a single forward frame.
    """
    yaw0 = float(state.yaw())
    if mode == "none":
        yaws = np.array([yaw0])
    elif mode == "yaw-sweep":
        frames = max(int(round(sweep_duration * render_hz)) + 1, 2)
        yaws = yaw0 + np.linspace(-math.pi / 2.0, math.pi / 2.0, frames)
    else:
        raise ValueError(f"unknown observation mode '{mode}'")

    for yaw in yaws:
        observe(scene, voxel_map, state.p_WB, quat_from_yaw(float(yaw)), intr)
    logger.info("[Episode] initial observation '%s': %d frames", mode, len(yaws))
    return voxel_map
