from .batch import run_batch
from .orchestrator import run_episode

__all__ = ["run_batch", "run_episode"]
