"""Command line entry point: ``phlab run <config> [--workers N] [--out DIR]`` and ``phlab list``."""

from __future__ import annotations

import argparse
import sys

from .harness import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VALIDATION,
    ConfigError,
    ValidationFailure,
    describe,
    load_config,
    run,
)
from .parallel import WORKERS_ENV, default_workers


def _parser():
    p = argparse.ArgumentParser(
        prog="phlab",
        description="Numerical experiments on partially hyperbolic torus maps.",
        epilog=f"The default worker count is read from ${WORKERS_ENV} (1 if unset).",
    )
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config", help="path to an INI experiment config")
    r.add_argument("--workers", type=int, default=None, help="worker processes")
    r.add_argument("--out", default=None, help="output directory")
    sub.add_parser("list", help="list available experiments")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        sys.stdout.write(describe())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
        workers = args.workers or cfg.workers or default_workers()
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(cfg, out_dir=args.out, workers=workers)
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    m = result.manifest
    for c in m["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status}  {c['name']}: {c['value']} (threshold {c['threshold']})")
    print(f"wrote {result.out_dir}")
    return EXIT_OK if m["passed"] else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
