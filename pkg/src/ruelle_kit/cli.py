"""Command line entry point: ``ruelle-kit <command> config.json``.

Exit codes: 0 success, 1 verification or bound violation, 2 config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load

COMMANDS = ("class", "spectrum", "determinant", "bounds", "verify")
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("ruelle_kit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ruelle-kit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--theta", type=float)
        p.add_argument("--K", type=int, nargs="+", dest="K_list", metavar="K",
                       help="truncation sizes, ascending")
        p.add_argument("--n-traces", type=int, dest="n_traces")
        p.add_argument("--R", type=float)
        p.add_argument("--order-m", type=int, dest="order_m")
        p.add_argument("--out")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _thread_limit():
    n = os.environ.get("RUELLE_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load(args.config)
        K_list = tuple(args.K_list) if args.K_list else None
        cfg = cfg.with_overrides(theta=args.theta, K_list=K_list, n_traces=args.n_traces,
                                 R=args.R, order_m=args.order_m, out=args.out)
    except json.JSONDecodeError as exc:
        print(f"config error: {args.config}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .pipeline import Pipeline

    try:
        with _thread_limit():
            _, checks = Pipeline(cfg).run(args.command)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    failed = [c for c in checks if not c.passed]
    for c in checks:
        log.info("%s %s value=%.3g limit=%.3g", "PASS" if c.passed else "FAIL", c.name, c.value, c.limit)
    if failed:
        for c in failed:
            print(f"violation: {c.name} value={c.value:.6g} limit={c.limit:.6g}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
