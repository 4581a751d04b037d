# app.py - Command-line application for the spray mission simulator
import argparse
import logging
import sys
from typing import List, Optional

from evaluation.report import SWEEP_PARAMS, format_summary, format_sweep, sweep_rows, write_sweep_csv
from evaluation.suite_runner import run_suite
from simulation.scene import load_scene, scene_summary
from src.config import MissionConfig, load_mission_config, load_settings
from src.logger import configure_logging, log_system
from src.models import SpraySimError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ABORTED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spraysim", description="UAV door-handle spray mission simulator")
    parser.add_argument("--log-level", default=None, help="overrides SPRAYSIM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an evaluation suite")
    run.add_argument("--scene", required=True)
    run.add_argument("--config", default=None, help="mission config JSON (defaults when omitted)")
    run.add_argument("--trials", type=int, default=10)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--workers", type=int, default=None, help="overrides SPRAYSIM_WORKERS")

    validate = sub.add_parser("validate", help="check a scene file")
    validate.add_argument("--scene", required=True)

    sweep = sub.add_parser("sweep", help="spraying-parameter study through the spray models")
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sweep.add_argument("--values", required=True, type=float, nargs="+")
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--out", default=None, help="also write the rows as CSV")
    return parser


def _run(args, settings) -> int:
    workers = args.workers if args.workers is not None else settings.workers
    if args.trials < 1:
        logger.error("[APP] --trials must be >= 1")
        return EXIT_CONFIG
    log_system("suite_started", {"scene": args.scene, "trials": args.trials, "seed": args.seed})
    suite, results = run_suite(args.scene, args.config, args.trials, args.seed, args.out,
                               workers=workers, mission_log=True)
    print(format_summary(suite), end="")
    log_system("suite_finished", {"successes": suite.success_count, "trials": suite.trial_count})
    return EXIT_OK if not any(r.aborted for r in results) else EXIT_ABORTED


def _validate(args) -> int:
    scene = load_scene(args.scene)
    summary = scene_summary(scene)
    print(f"{args.scene}: valid")
    for key, value in summary.items():
        print(f"  {key}: {value}")
    return EXIT_OK


def _sweep(args) -> int:
    config = load_mission_config(args.config) if args.config else MissionConfig()
    rows = sweep_rows(args.param, args.values, config)
    print(format_sweep(rows), end="")
    if args.out:
        write_sweep_csv(rows, args.out)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except SpraySimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    configure_logging(args.log_level or settings.log_level)

    try:
        if args.command == "run":
            return _run(args, settings)
        if args.command == "validate":
            return _validate(args)
        return _sweep(args)
    except SpraySimError as e:
        logger.error(f"[APP] {type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
