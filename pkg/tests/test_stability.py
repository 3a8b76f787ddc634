import os

os.environ.setdefault("DATABASE_URL", "sqlite://")

import threading
import time
import unittest
from unittest.mock import patch

import numpy as np
from fastapi.testclient import TestClient

import main
from core.mapping import FREE, OCCUPIED, OccupancyGrid
from core.publisher import GridPublisher
from core.world import SceneSpec
from database.models import init_db
from tools.simulation import run_batch
from tools.simulation.persistence import list_episode_records, persist_episode
from tools.simulation.types import EpisodeConfig, EpisodeResult, Termination


def _result(cfg, termination=Termination.SUCCESS):
    return EpisodeResult(config=cfg, termination=termination, duration=2.0, time_to_goal=2.0)


class StabilityTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        init_db()

    def test_readers_never_see_a_torn_snapshot(self):
        publisher = GridPublisher(OccupancyGrid.filled(FREE))
        grids = [OccupancyGrid.filled(OCCUPIED if i % 2 else FREE) for i in range(50)]
        mismatches = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                version, grid = publisher.latest()
                if grid.version != version:
                    mismatches.append((version, grid.version))

        readers = [threading.Thread(target=reader) for _ in range(4)]
        for thread in readers:
            thread.start()
        for grid in grids:
            publisher.publish(grid)
        stop.set()
        for thread in readers:
            thread.join()

        self.assertEqual(mismatches, [])
        self.assertEqual(publisher.version, 51)

    def test_snapshots_cannot_be_mutated_by_readers(self):
        publisher = GridPublisher(OccupancyGrid.filled(FREE))
        _, grid = publisher.latest()
        with self.assertRaises(ValueError):
            grid.values[0, 0, 0] = OCCUPIED

    def test_batch_results_do_not_depend_on_job_count(self):
        episodes = [EpisodeConfig(scene=SceneSpec("cwall", size), seed=i) for i, size in enumerate((0.5, 1.0, 2.0, 3.0))]

        def fake_run(cfg, run=None):
            time.sleep(0.01 * (4 - cfg.seed))
            return _result(cfg, Termination.SUCCESS if cfg.scene.size < 2 else Termination.STUCK)

        with patch("tools.simulation.batch.run_episode", side_effect=fake_run):
            serial_rows, serial = run_batch(episodes, jobs=1)
            parallel_rows, parallel = run_batch(episodes, jobs=4)

        self.assertEqual([r.config for r in serial], [r.config for r in parallel])
        self.assertEqual(serial_rows, parallel_rows)

    def test_concurrent_persistence(self):
        before = len(list_episode_records(limit=10_000))
        cfg = EpisodeConfig()
        threads = [threading.Thread(target=persist_episode, args=(_result(cfg),), kwargs={"batch_label": "threads"}) for _ in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.assertEqual(len(list_episode_records(limit=10_000)), before + 8)


class ApiTests(unittest.TestCase):
    def test_health_check(self):
        with TestClient(main.app) as client:
            response = client.get("/")
        self.assertEqual(response.status_code, 200)
        self.assertIn("running", response.json()["status"])

    def test_episode_request_runs_in_the_background(self):
        with patch("main.run_episode", side_effect=lambda cfg, run=None: _result(cfg)):
            with TestClient(main.app) as client:
                response = client.post("/episodes", json={"overrides": ["scene=cwall:1.0", "episode.seed=3"]})
                self.assertEqual(response.status_code, 202)
                request_id = response.json()["request_id"]

                deadline = time.time() + 5.0
                while time.time() < deadline:
                    listing = client.get("/episodes").json()
                    if request_id not in listing["pending"]:
                        break
                    time.sleep(0.01)

        stored = [e for e in listing["episodes"] if e["request_id"] == request_id]
        self.assertEqual(len(stored), 1)
        self.assertEqual(stored[0]["family"], "cwall")
        self.assertEqual(stored[0]["seed"], 3)

        with TestClient(main.app) as client:
            record = client.get(f"/episodes/{stored[0]['id']}")
        self.assertEqual(record.status_code, 200)
        self.assertEqual(record.json()["termination"], "Success")

    def test_bad_request_is_rejected_up_front(self):
        with TestClient(main.app) as client:
            response = client.post("/episodes", json={"overrides": ["mppi.samples=-1"]})
            missing = client.get("/episodes/987654321")
        self.assertEqual(response.status_code, 422)
        self.assertIn("mppi", response.json()["detail"])
        self.assertEqual(missing.status_code, 404)

    def test_failed_run_is_reported(self):
        with patch("main.run_episode", side_effect=RuntimeError("boom")):
            with TestClient(main.app) as client:
                request_id = client.post("/episodes", json={}).json()["request_id"]
                deadline = time.time() + 5.0
                status = "running"
                while time.time() < deadline and status == "running":
                    status = client.get("/episodes").json()["pending"].get(request_id, "done")
                    time.sleep(0.01)
        self.assertEqual(status, "failed")


if __name__ == "__main__":
    unittest.main()
