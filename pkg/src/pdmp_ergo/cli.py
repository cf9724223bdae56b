"""Command line entry point.

Usage: pdmp-ergo <simulate|certify|verify|inequality> --config PATH
       [--seed N] [--workers N] [--out DIR]

The worker count resolves as: --workers flag, then the PDMP_ERGO_WORKERS
environment variable, then the config file.  Exit status is zero exactly
when every assertion in the run report passed.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import EXPERIMENTS, ConfigError, parse_config, with_overrides
from .experiments import run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdmp-ergo",
        description="simulate and certify piecewise deterministic Markov processes",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--workers", type=int, default=None, help="override the worker count")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def _env_workers() -> int | None:
    raw = os.environ.get("PDMP_ERGO_WORKERS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"PDMP_ERGO_WORKERS must be an integer, got {raw!r}")
    if value <= 0:
        raise ConfigError("PDMP_ERGO_WORKERS must be positive")
    return value


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        workers = args.workers if args.workers is not None else _env_workers()
        config = with_overrides(
            config,
            experiment=args.experiment,
            seed=args.seed,
            workers=workers,
            out_dir=args.out,
        )
        if config.workers <= 0:
            raise ConfigError("workers must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
