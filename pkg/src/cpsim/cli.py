"""Command line entry points.

Exit codes: 0 success, 1 usage or configuration errors, 2 runtime failures
(a collision or a truncated mission in the run). Event-log verbosity comes
from the CP_SIM_LOG environment variable (error, info, debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .harness import (
    TrialGenerationError,
    build_trial,
    demo_trial,
    run_experiment,
    run_trial,
)
from .orchestrator import ScenarioError, load_cleaning_setup, run_scenario
from .report import render_replay, write_artifacts
from .world import WorldError, load_world

log = logging.getLogger("cpsim.cli")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    # Usage problems are exit code 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    raw = os.environ.get("CP_SIM_LOG", "error").lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        level = logging.ERROR
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if raw not in _LOG_LEVELS:
        logging.getLogger("cpsim").error(
            "CP_SIM_LOG=%r not in {error, info, debug}; using error", raw)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cpsim",
                     description="Warehouse SP-vs-CP simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[], add_help=True,
                         help="run the paired experiment and write artifacts")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, default=None,
                     help="override [experiment] seed")
    sim.add_argument("--trials", type=int, default=None,
                     help="override [experiment] trials")
    sim.add_argument("--mode", choices=["sp", "cp", "both"], default=None,
                     help="override [experiment] mode")
    sim.add_argument("--out", default=None,
                     help="override [experiment] out directory")
    sim.add_argument("--parallel", type=int, default=1,
                     help="worker processes (trials are share-nothing)")

    rep = sub.add_parser("replay",
                         help="re-run one trial and render its paths")
    rep.add_argument("--config", required=True)
    rep.add_argument("--trial", required=True,
                     help="trial id, or 'demo' for the scripted scenario")
    rep.add_argument("--render", required=True,
                     help="output image (vector format by extension)")

    val = sub.add_parser("validate",
                         help="parse the config and check feasibility")
    val.add_argument("--config", required=True)

    cln = sub.add_parser("clean",
                         help="run a cleaning-fleet event scenario")
    cln.add_argument("--config", required=True)
    cln.add_argument("--script", required=True)
    cln.add_argument("--out", required=True)
    return parser


def _with_overrides(config, args):
    from dataclasses import replace
    exp = config.experiment
    kwargs = {}
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        kwargs["trials"] = args.trials
    if getattr(args, "mode", None) is not None:
        kwargs["modes"] = {"sp": ("SP",), "cp": ("CP",),
                           "both": ("SP", "CP")}[args.mode]
    if getattr(args, "out", None) is not None:
        kwargs["out"] = args.out
    if kwargs:
        config = replace(config, experiment=replace(exp, **kwargs))
    return config


def _cmd_simulate(args) -> int:
    config = _with_overrides(load_config(args.config), args)
    if args.parallel < 1:
        print("cpsim: error: --parallel must be >= 1", file=sys.stderr)
        return 1
    summary = run_experiment(config, parallel=args.parallel,
                             progress=lambda done, total: log.info(
                                 "trial %d/%d done", done, total))
    out_dir = Path(config.experiment.out)
    files = write_artifacts(out_dir, summary)
    for f in files:
        print(f)
    if summary.collisions or summary.truncated:
        print(f"cpsim: runtime failure: {summary.collisions} collisions, "
              f"{summary.truncated} truncated missions", file=sys.stderr)
        return 2
    return 0


def _cmd_replay(args) -> int:
    config = load_config(args.config)
    if args.trial == "demo":
        spec = demo_trial(config)
    else:
        try:
            trial_id = int(args.trial)
        except ValueError:
            print(f"cpsim: error: --trial must be an integer or 'demo', "
                  f"got {args.trial!r}", file=sys.stderr)
            return 1
        if trial_id < 0:
            print("cpsim: error: --trial must be >= 0", file=sys.stderr)
            return 1
        spec = build_trial(config, trial_id)
    result = run_trial(config, spec, config.experiment.modes)
    render_replay(config, result, args.render)
    print(args.render)
    bad = [r for r in result.by_mode.values() if r.collided or r.truncated]
    if bad:
        print("cpsim: runtime failure in replayed trial", file=sys.stderr)
        return 2
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    world = load_world(config.map_text(), config)
    spec = build_trial(config, 0)
    print(f"ok: {world.width}x{world.height} cells at "
          f"{world.resolution} m, {len(world.aisles)} aisle regions, "
          f"trial 0 feasible (start {spec.mission.start} -> "
          f"goal {spec.mission.goal})")
    return 0


def _cmd_clean(args) -> int:
    setup = load_cleaning_setup(args.config)
    script = Path(args.script).read_text()
    outcome = run_scenario(script, setup)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    commands_path = out_dir / "commands.csv"
    commands_path.write_text(outcome.commands_csv())
    metrics_path = out_dir / "metrics.txt"
    metrics_path.write_text(outcome.metrics_text())
    print(commands_path)
    print(metrics_path)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": _cmd_simulate, "replay": _cmd_replay,
                "validate": _cmd_validate, "clean": _cmd_clean}
    try:
        return handlers[args.command](args)
    except (ConfigError, WorldError, TrialGenerationError,
            ScenarioError, OSError) as e:
        print(f"cpsim: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
