"""Command-line entry point.

Every stage subcommand fills in the run directory up to and including that
stage, reusing artifacts already present.  Without ``--out`` a fresh
``run-NNN`` directory is created under the config's ``output`` root.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .pipeline import (ConfigError, ExperimentConfig, MissingArtifacts, Pipeline, StageError,
                       bundled_config, default_workers, load_config, new_run_dir, report, tomllib)

COMMANDS = {
    "train": "train",
    "sample": "sample",
    "explain": "explain",
    "mine": "mine",
    "generalize": "generalize",
    "evaluate": "evaluate",
    "weakness": "weakness",
    "improve": "improve",
    "run": "report",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ruleguard",
                                description="Mine, generalize and test rules of RL policies.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["report"]:
        sp = sub.add_parser(name)
        if name != "report":
            sp.add_argument("--config", required=False,
                            help="experiment TOML file (default: bundled smoke config)")
            sp.add_argument("--seed", type=int, default=None, help="override the master seed")
            sp.add_argument("--workers", type=int, default=None,
                            help="worker processes for evaluation (default: CPU count)")
        sp.add_argument("--out", default=None, help="run directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("show-config", help="print the bundled smoke config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "show-config":
        sys.stdout.write(bundled_config("smoke"))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        if args.out is None:
            print("report: --out RUN_DIR is required", file=sys.stderr)
            return 2
        try:
            text = report(args.out, *_report_context(Path(args.out)))
        except MissingArtifacts as e:
            print(f"report: {e}", file=sys.stderr)
            return 1
        sys.stdout.write(text)
        return 0
    try:
        if args.config is None:
            cfg = ExperimentConfig.from_dict(_smoke_dict(args.seed))
        else:
            cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print(f"[config] {e}", file=sys.stderr)
        return 2
    run_dir = Path(args.out) if args.out else new_run_dir(Path(cfg.base_dir) / cfg.output)
    workers = args.workers if args.workers is not None else default_workers()
    try:
        Pipeline(cfg, run_dir, workers).run(COMMANDS[args.command])
    except StageError as e:
        print(str(e), file=sys.stderr)
        return 1
    if args.command == "run":
        sys.stdout.write((run_dir / "summary.txt").read_text())
    print(f"run directory: {run_dir}")
    return 0


def _smoke_dict(seed):
    data = tomllib.loads(bundled_config("smoke"))
    if seed is not None:
        data["seed"] = seed
    return data


def _report_context(run_dir: Path):
    """Feature groups and names for a run, read from its stored config."""
    cfg_file = run_dir / "config.json"
    if not cfg_file.exists():
        return None, None
    data = json.loads(cfg_file.read_text())
    try:
        cfg = ExperimentConfig.from_dict(data)
    except ConfigError:
        return None, None
    return cfg.feature_groups(), cfg.make_env().schema.names


if __name__ == "__main__":
    raise SystemExit(main())
