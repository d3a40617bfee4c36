"""``jkoflow <experiment> [--config FILE] [--seed N] [--out DIR] [--check]``.

Exit status: 0 on success, 1 when ``--check`` is given and an acceptance
check failed, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, load_config


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jkoflow", description="Run one experiment and write CSV files plus report.txt.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", metavar="FILE", help="key = value parameter file")
    p.add_argument("--seed", type=_seed, default=None, help="overrides the seed in the config file (default 0)")
    p.add_argument("--out", metavar="DIR", default=None, help="output directory (default out/<experiment>)")
    p.add_argument("--check", action="store_true", help="exit with status 1 if any acceptance check fails")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.seed)
    except ConfigError as exc:
        print(f"jkoflow: error: {exc}", file=sys.stderr)
        return 2
    from .experiments import run

    out_dir = args.out or f"out/{args.experiment}"
    result = run(cfg, out_dir)
    for c in result.checks:
        print(c.line())
    print(f"wrote {len(result.files)} files to {out_dir}")
    if args.check and not result.passed:
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
