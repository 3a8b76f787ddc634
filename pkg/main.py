import logging
import sys
import threading
import uuid
from typing import Dict, List, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from database.models import init_db
from tools.config import ConfigError, load_config
from tools.router import route_command
from tools.simulation.orchestrator import run_episode
from tools.simulation.persistence import get_episode_record, list_episode_records, persist_episode

load_dotenv()

logger = logging.getLogger(__name__)

app = FastAPI(title="PA-MPPI Simulator")

# request id -> "running" | "done" | "failed"
_requests: Dict[str, str] = {}
_requests_lock = threading.Lock()


class EpisodeRequest(BaseModel):
    overrides: List[str] = []
    config_path: Optional[str] = None


def _set_status(request_id: str, status: str) -> None:
    with _requests_lock:
        _requests[request_id] = status


def run_and_store(request_id: str, config_path: Optional[str], overrides: List[str]) -> None:
    """
    Runs in the background so the request returns immediately; the episode
    summary lands in the database under the request id.
    """
    try:
        cfg = load_config(config_path, overrides)
        result = run_episode(cfg.episode, cfg)
        persist_episode(result, request_id=request_id)
        logger.info("[API] %s finished: %s", request_id, result.termination.value)
        _set_status(request_id, "done")
    except Exception as exc:
        logger.exception("[API] %s crashed: %s", request_id, exc)
        _set_status(request_id, "failed")


@app.on_event("startup")
def on_startup() -> None:
    logger.info("Initializing Database...")
    init_db()
    logger.info("Database Initialized.")


@app.get("/")
def health_check() -> dict:
    return {"status": "PA-MPPI simulator is running."}


@app.post("/episodes", status_code=202)
def start_episode(request: EpisodeRequest) -> dict:
    # validate up front so a bad override fails the request, not the thread
    try:
        load_config(request.config_path, request.overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    request_id = uuid.uuid4().hex
    _set_status(request_id, "running")
    thread = threading.Thread(
        target=run_and_store, args=(request_id, request.config_path, list(request.overrides)), daemon=True
    )
    thread.start()
    return {"request_id": request_id, "status": "running"}


@app.get("/episodes")
def list_episodes(limit: int = 50) -> dict:
    with _requests_lock:
        pending = {rid: status for rid, status in _requests.items() if status != "done"}
    return {"episodes": list_episode_records(limit=limit), "pending": pending}


@app.get("/episodes/{record_id}")
def get_episode(record_id: int) -> dict:
    record = get_episode_record(record_id)
    if record is None:
        raise HTTPException(status_code=404, detail=f"no episode record {record_id}")
    return record


def main() -> None:
    sys.exit(route_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
