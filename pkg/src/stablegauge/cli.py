"""Command-line entry point: run checks from a config and write reports."""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
import traceback
from typing import Sequence

from .checks import PRESETS, REGISTRY, CheckOutcome, Context
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .report import CheckRecord, Report, write_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULT_CONFIG = {
    "domain": {"shape": "ball", "center": [0.0, 0.0], "radius": 1.0},
    "alpha": 1.0,
    "potential": {"form": "radial_power", "center": [0.3, 0.0], "beta": 0.5, "scale": 0.5},
    "grid": {"cells": 64},
}


def list_checks() -> list[str]:
    return [f"{s.name} — {s.anchor}  [{', '.join(s.modules)}]" for s in REGISTRY.values()]


def run_checks(config: ExperimentConfig, names: Sequence[str] | None = None,
               threads: int | None = None) -> Report:
    """Execute checks in the given order; exceptions become failed records."""
    names = list(names if names is not None else (config.checks or REGISTRY))
    ctx = Context(config, threads)
    records = []
    for name in names:
        entry = REGISTRY[name]
        t0 = time.perf_counter()
        try:
            out = entry.run(ctx)
        except Exception as exc:  # a broken check is a failed check, not a crashed run
            out = CheckOutcome("fail", {"error": f"{type(exc).__name__}: {exc}"},
                               note=traceback.format_exception_only(type(exc), exc)[-1].strip())
        records.append(CheckRecord(name, entry.anchor, out.status, out.metrics, out.error_bars, out.note,
                                   out.tables, time.perf_counter() - t0))
    return Report(config.echo(), config.seed, records)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config (default: built-in unit ball)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", metavar="DIR", help="override the config output directory")
    common.add_argument("--threads", type=int, help="Monte Carlo worker threads (env STABLEGAUGE_THREADS)")
    p = argparse.ArgumentParser(prog="stablegauge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the checks listed in the config (all if none)")
    sub.add_parser("list-checks", help="print registered checks with anchors and modules")
    sub.add_parser("mc-selftest", parents=[common], help="sampler self-tests only")
    for name in PRESETS:
        sub.add_parser(name, parents=[common], help=f"checks: {', '.join(PRESETS[name])}")
    return p


def _config(args) -> ExperimentConfig:
    registered = list(REGISTRY)
    cfg = load_config(args.config, registered) if args.config else parse_config(DEFAULT_CONFIG, registered)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("config field 'seed': must be >= 0")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-checks":
        print("\n".join(list_checks()))
        return EXIT_OK
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        names = None
    elif args.command == "mc-selftest":
        names = ["selftest"]
    else:
        names = PRESETS[args.command]
    report = run_checks(cfg, names, args.threads)
    write_report(report, cfg.output_dir)
    for c in report.checks:
        print(f"{c.status:10s} {c.name} ({c.anchor})")
    print(f"report written to {cfg.output_dir}/report.json")
    return EXIT_FAIL if report.failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
