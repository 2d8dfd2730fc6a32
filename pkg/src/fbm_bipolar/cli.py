"""Command-line entry point: ``fbm-bipolar <experiment> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .runner import NumericalCheckFailure, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fbm-bipolar", description="Spectral fBm / bipolar-fluid experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--hurst", type=float)
    p.add_argument("--modes", type=int, help="truncation M_max")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float, dest="t_final")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--samples", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("hurst", "modes", "dt", "t_final", "seed", "samples", "out")}
    try:
        cfg = load_config(args.config, overrides, args.experiment)
        man = run_experiment(args.experiment, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalCheckFailure as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in man.findings:
        print(f"finding: {f}")
    print(f"{args.experiment}: ok, {len(man.outputs)} outputs in {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
