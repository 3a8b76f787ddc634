import csv
import io
import json
import logging
import math
import os
import tempfile
import threading
from typing import Iterable, List, Optional

from core.mapping import OccupancyGrid, grid_from_bytes, grid_to_bytes
from core.reference import ReferenceTrajectory
from database.models import EpisodeRecord, SessionLocal

from .types import EpisodeResult, StepRecord, SummaryRow

logger = logging.getLogger(__name__)

# sessions are serialized: an in-memory SQLite engine shares one connection
_db_lock = threading.Lock()

SUMMARY_COLUMNS = [
    "controller",
    "family",
    "size",
    "repeats",
    "success_pct",
    "stuck_pct",
    "collision_pct",
    "mean_time_to_goal_s",
    "mean_penetration_m",
]


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Writes to a temp file next to the target, then renames it over the target."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _json_number(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def trajectory_lines(steps: Iterable[StepRecord]) -> str:
    return "".join(json.dumps(step.to_dict(), sort_keys=True) + "\n" for step in steps)


def write_trajectory(result: EpisodeResult, path: str) -> None:
    atomic_write_text(path, trajectory_lines(result.steps))


def read_trajectory(path: str) -> List[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_summary(result: EpisodeResult, path: str) -> None:
    summary = {key: _json_number(value) for key, value in result.summary().items()}
    atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_grid(grid: OccupancyGrid, path: str) -> None:
    atomic_write_bytes(path, grid_to_bytes(grid))


def read_grid(path: str) -> OccupancyGrid:
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read())


def write_reference(reference: ReferenceTrajectory, path: str, samples: int = 200) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t", "x", "y", "z", "yaw"])
    for row in reference.polyline(samples):
        writer.writerow([f"{value:.6f}" for value in row])
    atomic_write_text(path, buffer.getvalue())


def summary_csv(rows: Iterable[SummaryRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        time_to_goal = "" if math.isnan(row.mean_time_to_goal_s) else f"{row.mean_time_to_goal_s:.3f}"
        writer.writerow(
            [
                row.controller,
                row.family,
                f"{row.size:g}",
                row.repeats,
                f"{row.success_pct:.1f}",
                f"{row.stuck_pct:.1f}",
                f"{row.collision_pct:.1f}",
                time_to_goal,
                f"{row.mean_penetration_m:.4f}",
            ]
        )
    return buffer.getvalue()


def write_summary_csv(rows: Iterable[SummaryRow], path: str) -> None:
    atomic_write_text(path, summary_csv(rows))


def persist_episode(result: EpisodeResult, batch_label: Optional[str] = None, request_id: Optional[str] = None) -> Optional[int]:
    """Stores the episode summary; a database failure is logged, never raised."""
    summary = result.summary()
    with _db_lock:
        return _store(summary, batch_label, request_id)


def _store(summary: dict, batch_label: Optional[str], request_id: Optional[str]) -> Optional[int]:
    db = SessionLocal()
    try:
        record = EpisodeRecord(
            request_id=request_id,
            batch_label=batch_label,
            controller=summary["controller"],
            family=summary["family"],
            size=summary["size"],
            scene_seed=summary["scene_seed"],
            seed=summary["seed"],
            termination=summary["termination"],
            time_to_goal_s=summary["time_to_goal_s"],
            duration_s=summary["duration_s"],
            max_penetration_m=summary["max_penetration_m"],
            final_coverage=summary["final_coverage"],
            starved=summary["starved"],
            error=summary["error"],
        )
        db.add(record)
        db.commit()
        return record.id
    except Exception as exc:
        logger.error("[Persistence] could not store episode record: %s", exc)
        db.rollback()
        return None
    finally:
        db.close()


def list_episode_records(limit: int = 50) -> List[dict]:
    with _db_lock:
        db = SessionLocal()
        try:
            rows = db.query(EpisodeRecord).order_by(EpisodeRecord.id.desc()).limit(limit).all()
            return [row.to_dict() for row in rows]
        finally:
            db.close()


def get_episode_record(record_id: int) -> Optional[dict]:
    with _db_lock:
        db = SessionLocal()
        try:
            row = db.query(EpisodeRecord).filter(EpisodeRecord.id == record_id).first()
            return row.to_dict() if row else None
        finally:
            db.close()
