import os
import unittest

from tools.config import ConfigError, RunConfig, apply_overrides, dump_config, load_config, parse_config

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")


class ParseConfigTests(unittest.TestCase):
    def test_empty_document_gives_defaults(self):
        cfg = parse_config("")
        self.assertEqual(cfg, RunConfig())
        self.assertEqual(cfg.mppi.samples, 10000)
        self.assertEqual(cfg.mppi.horizon, 15)
        self.assertEqual(cfg.costs.c_collision, 15.0)
        self.assertEqual(cfg.episode.controller, "pa-mppi")

    def test_blocks_are_typed(self):
        cfg = parse_config("mppi:\n  samples: 512\n  sigma: [0.5, 1, 1, 1]\nepisode:\n  scene: {family: hole, size: 1, seed: 3}\n")
        self.assertEqual(cfg.mppi.samples, 512)
        self.assertEqual(cfg.mppi.sigma, (0.5, 1.0, 1.0, 1.0))
        self.assertEqual(cfg.episode.scene.family, "hole")
        self.assertIsInstance(cfg.episode.scene.size, float)
        self.assertEqual(cfg.episode.scene.seed, 3)

    def test_unknown_key_is_named_by_path(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("mppi:\n  samplez: 10\n")
        self.assertIn("mppi.samplez", str(ctx.exception))

    def test_syntax_error_reports_a_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("mppi:\n  samples: 10\n  sigma: [1, 2\nepisode: {}\n")
        self.assertRegex(str(ctx.exception), r"line \d+")

    def test_wrong_types(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("mppi:\n  samples: many\n")
        self.assertIn("mppi.samples", str(ctx.exception))
        with self.assertRaises(ConfigError):
            parse_config("mppi:\n  sigma: [1, 1, 1]\n")
        with self.assertRaises(ConfigError):
            parse_config("mppi: 5\n")
        with self.assertRaises(ConfigError):
            parse_config("- just\n- a list\n")

    def test_value_checks_become_config_errors(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("mppi:\n  temperature: 0\n")
        self.assertTrue(str(ctx.exception).startswith("mppi:"))
        with self.assertRaises(ConfigError):
            parse_config("episode:\n  controller: greedy\n")

    def test_batch_block(self):
        cfg = load_config(os.path.join(CONFIG_DIR, "scenes.yaml"))
        self.assertEqual(cfg.batch.label, "scenes")
        families = [cell.family for cell in cfg.batch.cells]
        self.assertEqual(families, ["cwall", "hole", "fourwall"])
        self.assertEqual(cfg.batch.cells[0].sizes, (0.5, 1.0, 2.0, 3.0))
        self.assertEqual(set(cfg.batch.controllers), {"pa-mppi", "tracking-mppi"})

    def test_shipped_default_loads(self):
        cfg = load_config(os.path.join(CONFIG_DIR, "default.yaml"))
        self.assertEqual(cfg.episode.scene.family, "empty")
        self.assertEqual(cfg.episode.init_observation, "yaw-sweep")

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/run.yaml")


class OverrideTests(unittest.TestCase):
    def test_dotted_keys(self):
        cfg = load_config(None, ["mppi.samples=256", "episode.timeout=12.5", "costs.R=[0.1, 0.1, 0.1, 0.1]"])
        self.assertEqual(cfg.mppi.samples, 256)
        self.assertEqual(cfg.episode.timeout, 12.5)
        self.assertEqual(cfg.costs.R, (0.1, 0.1, 0.1, 0.1))

    def test_shorthands(self):
        cfg = load_config(None, ["controller=tracking-mppi", "scene=cwall:2.0"])
        self.assertEqual(cfg.episode.controller, "tracking-mppi")
        self.assertEqual((cfg.episode.scene.family, cfg.episode.scene.size, cfg.episode.scene.seed), ("cwall", 2.0, 0))
        cfg = load_config(None, ["scene=hole:1.0:4"])
        self.assertEqual(cfg.episode.scene.seed, 4)

    def test_overrides_win_over_the_document(self):
        cfg = parse_config("mppi:\n  samples: 64\n", ["mppi.samples=128"])
        self.assertEqual(cfg.mppi.samples, 128)

    def test_bad_overrides(self):
        with self.assertRaises(ConfigError):
            apply_overrides({}, ["mppi.samples"])
        with self.assertRaises(ConfigError):
            apply_overrides({}, ["scene=cwall:wide"])
        with self.assertRaises(ConfigError):
            apply_overrides({"mppi": 3}, ["mppi.samples=2"])
        with self.assertRaises(ConfigError):
            load_config(None, ["mppi.bogus=1"])


class DumpConfigTests(unittest.TestCase):
    def test_dump_reloads_to_the_same_bytes(self):
        cfg = load_config(os.path.join(CONFIG_DIR, "scenes.yaml"), ["scene=fourwall:1.5", "mppi.samples=99"])
        text = dump_config(cfg)
        again = parse_config(text)
        self.assertEqual(again, cfg)
        self.assertEqual(dump_config(again), text)


if __name__ == "__main__":
    unittest.main()
