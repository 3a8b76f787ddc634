"""
Command routing for the simulator: run, batch, plot and serve.

Exit status of `run` encodes the termination label (0 Success, 2 Stuck,
3 Collision); every error path returns 1 with a one-line diagnostic.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

import yaml

from core.world import GOAL_POSITION, build_scene, export_scene
from database.models import init_db
from tools.config import DEFAULT_OUTPUT_DIR, ConfigError, RunConfig, dump_config, load_config
from tools.simulation.batch import expand_batch, run_batch
from tools.simulation.orchestrator import run_episode
from tools.simulation.persistence import (
    atomic_write_text,
    persist_episode,
    read_grid,
    read_trajectory,
    write_grid,
    write_reference,
    write_summary,
    write_summary_csv,
    write_trajectory,
)
from tools.simulation.response import format_episode_line, format_summary_table
from tools.simulation.types import EpisodeResult, Termination

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pampc", description="Perception-aware MPPI quadrotor simulator.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    sub = parser.add_subparsers(dest="command")

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="YAML run config; defaults apply when omitted.")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="Override a config value (repeatable).")
        p.add_argument("--out", default=None, help=f"Output directory (default: $PAMPPI_OUTPUT_DIR or '{DEFAULT_OUTPUT_DIR}').")
        p.add_argument("--seed", type=int, default=None, help="Controller seed (episode.seed).")
        p.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Log at DEBUG level.")

    run_p = sub.add_parser("run", help="Run one episode.")
    add_common(run_p)
    run_p.add_argument("extra", nargs="*", metavar="KEY=VALUE", help="Shorthand overrides, e.g. controller=tracking-mppi scene=cwall:2.0")

    batch_p = sub.add_parser(
        "batch",
        help="Run the batch grid from the config's batch block.",
        description=(
            "Run the batch grid from the config's batch block. The scene-family grid ships as "
            "configs/scenes.yaml (formerly table2.cfg): pampc batch --config configs/scenes.yaml"
        ),
    )
    add_common(batch_p)
    batch_p.add_argument("--jobs", type=int, default=1, help="Episodes to run concurrently.")

    plot_p = sub.add_parser("plot", help="Top-down SVG of a trajectory over a grid slice.")
    plot_p.add_argument("trajectory", help="trajectory.jsonl from a run")
    plot_p.add_argument("grid", help="grid.bin from a run")
    plot_p.add_argument("output", help="SVG path to write")
    plot_p.add_argument("--z", type=float, default=None, help="Slice height in meters (default: start height).")
    plot_p.add_argument("--scene", default=None, help="scene.yaml from the run, for the goal marker.")
    plot_p.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Log at DEBUG level.")

    serve_p = sub.add_parser("serve", help="Serve the HTTP API.")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Log at DEBUG level.")
    return parser


def _load(args: argparse.Namespace, extra: Sequence[str] = ()) -> RunConfig:
    overrides = list(args.overrides) + list(extra)
    if args.seed is not None:
        overrides.append(f"episode.seed={args.seed}")
    return load_config(args.config, overrides)


def _output_dir(args: argparse.Namespace) -> str:
    return args.out or DEFAULT_OUTPUT_DIR


def write_episode_outputs(result: EpisodeResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_trajectory(result, os.path.join(out_dir, "trajectory.jsonl"))
    write_summary(result, os.path.join(out_dir, "summary.json"))
    if result.final_grid is not None:
        write_grid(result.final_grid, os.path.join(out_dir, "grid.bin"))
    if result.reference is not None:
        write_reference(result.reference, os.path.join(out_dir, "reference.csv"))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args, args.extra)
    scene = build_scene(cfg.episode.scene, cfg.quad.collision_radius)
    out_dir = _output_dir(args)

    result = run_episode(cfg.episode, cfg)
    write_episode_outputs(result, out_dir)
    atomic_write_text(os.path.join(out_dir, "config.yaml"), dump_config(cfg))
    atomic_write_text(os.path.join(out_dir, "scene.yaml"), export_scene(scene))

    init_db()
    persist_episode(result)

    print(format_episode_line(result))
    if result.error and not result.starved:
        return 1
    return result.termination.exit_code


def cmd_batch(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if not cfg.batch.cells:
        print(
            "batch: the config has no batch.cells; add e.g.\n"
            "  batch:\n    cells:\n      - {family: cwall, sizes: [0.5, 1.0], repeats: 5}",
            file=sys.stderr,
        )
        return 1

    out_dir = _output_dir(args)
    episodes = expand_batch(cfg.batch, cfg.episode)
    init_db()

    def store(index: int, result: EpisodeResult) -> None:
        ep = result.config
        name = f"{index:03d}_{ep.controller}_{ep.scene.family}_{ep.scene.size:g}_scene{ep.scene.seed}_seed{ep.seed}"
        write_episode_outputs(result, os.path.join(out_dir, "episodes", name))
        persist_episode(result, batch_label=cfg.batch.label)
        logger.info("[Batch] %s: %s", name, result.termination.value)

    rows, _ = run_batch(episodes, cfg, jobs=max(args.jobs, 1), on_result=store)
    write_summary_csv(rows, os.path.join(out_dir, "summary.csv"))
    atomic_write_text(os.path.join(out_dir, "config.yaml"), dump_config(cfg))
    print(format_summary_table(rows))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    from tools.plot import plot_topdown

    trajectory = read_trajectory(args.trajectory)
    grid = read_grid(args.grid)
    goal = GOAL_POSITION
    if args.scene:
        with open(args.scene, "r", encoding="utf-8") as fh:
            goal = yaml.safe_load(fh)["goal"]["position"]
    plot_topdown(grid, trajectory, args.output, z=args.z, goal=goal)
    print(f"wrote {args.output}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port)
    return 0


COMMANDS = {"run": cmd_run, "batch": cmd_batch, "plot": cmd_plot, "serve": cmd_serve}


def route_command(argv: Optional[List[str]] = None) -> int:
    """Parses argv, dispatches to the subcommand and maps failures to exit status 1."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    configure_logging(getattr(args, "verbose", False))

    if not args.command:
        parser.print_help(sys.stderr)
        return 1

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.exception("[CLI] %s crashed", args.command)
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
