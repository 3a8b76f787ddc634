import io
import logging
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from core.mapping import OccupancyGrid  # noqa: E402
from tools.simulation.persistence import atomic_write_bytes  # noqa: E402

logger = logging.getLogger(__name__)

# unknown, free, occupied
STATE_COLORS = ListedColormap(["#4a6fd8", "#5cbf62", "#d8453b"])


def _slice_index(grid: OccupancyGrid, z: float) -> int:
    k = int(np.floor((z - grid.origin[2]) / grid.resolution))
    return min(max(k, 0), grid.dims[2] - 1)


def plot_topdown(
    grid: OccupancyGrid,
    trajectory: Sequence[dict],
    out_path: str,
    z: Optional[float] = None,
    start: Optional[Sequence[float]] = None,
    goal: Optional[Sequence[float]] = None,
) -> None:
    """Top-down SVG: one z layer of the grid, the flown path, start and goal markers."""
    points = np.array([step["p"] for step in trajectory], dtype=np.float64).reshape(-1, 3)
    if z is None:
        z = float(points[0, 2]) if len(points) else float(grid.origin[2] + grid.dims[2] * grid.resolution / 2)
    if start is None and len(points):
        start = points[0]

    lower = grid.origin
    upper = grid.upper
    outside = np.any((points < lower) | (points > upper), axis=-1) if len(points) else np.zeros(0, dtype=bool)
    if np.any(outside):
        logger.warning("[Plot] %d trajectory points lie outside the grid bounds", int(outside.sum()))

    layer = grid.values[:, :, _slice_index(grid, z)].astype(np.int64) + 1
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(
        layer.T,
        origin="lower",
        extent=(lower[0], upper[0], lower[1], upper[1]),
        cmap=STATE_COLORS,
        vmin=0,
        vmax=2,
        interpolation="nearest",
    )
    if len(points):
        ax.plot(points[:, 0], points[:, 1], color="black", linewidth=1.5, label="trajectory")
    if start is not None:
        ax.plot(start[0], start[1], marker="o", color="white", markeredgecolor="black", linestyle="none", label="start")
    if goal is not None:
        ax.plot(goal[0], goal[1], marker="*", markersize=12, color="gold", markeredgecolor="black", linestyle="none", label="goal")

    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"occupancy at z = {z:.2f} m")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize="small")
    buffer = io.BytesIO()
    try:
        fig.savefig(buffer, format="svg", bbox_inches="tight")
    finally:
        plt.close(fig)
    atomic_write_bytes(out_path, buffer.getvalue())

