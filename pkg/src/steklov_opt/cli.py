"""Command-line entry point: ``steklov-opt {solve,optimize,validate,points}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .fileio import CoefficientFormatError
from .runner import ConfigError, RunConfig, floor2, read_config_file, run
from .shape_opt import DOMAIN_ERRORS, InsufficientEigenvaluesForCluster

EXIT_VALIDATION = 1
EXIT_ERROR = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="steklov-opt", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("solve", "optimize", "validate", "points"):
        p = sub.add_parser(mode)
        p.add_argument("--config", help="flat key=value file; command-line flags override it")
        p.add_argument("--d", type=int, choices=(3, 4), help="dimension")
        p.add_argument("--k", type=int, help="target eigenvalue index")
        p.add_argument("--N", type=int, help="harmonic truncation degree")
        p.add_argument("--mc", type=int, help="collocation point count")
        p.add_argument("--delta", type=float, help="source offset along the normal")
        p.add_argument("--eps", type=float, help="cluster threshold")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--coeffs", help="domain coefficient file (solve, points)")
        p.add_argument("--start", help="optimize start: random, ball or a coefficient file")
        p.add_argument("--restarts", type=int)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def config_from_args(args):
    values = read_config_file(args.config) if args.config else {}
    values["mode"] = args.mode
    for key in ("d", "k", "N", "mc", "delta", "eps", "seed", "out", "coeffs", "start", "restarts", "max_iter"):
        value = getattr(args, key)
        if value is not None:
            values[key] = value
    return RunConfig.from_mapping(values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        result = run(config)
    except (ConfigError, CoefficientFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DOMAIN_ERRORS + (InsufficientEigenvaluesForCluster,) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if config.mode == "validate":
        print(result.table())
        print("PASS" if result.passed else "FAIL")
        return 0 if result.passed else EXIT_VALIDATION
    if config.mode == "solve":
        for j, (s, c) in enumerate(zip(result.eigenvalues, result.costs)):
            print(f"sigma_{j} = {s:.10f}  C_{j} = {c:.10f}")
    elif config.mode == "points":
        print(f"wrote {config.mc} points to {config.out}")
    else:
        print(f"C_{config.k} = {result.value:.6f} (reported {floor2(result.value):.2f}), multiplicity {result.multiplicity}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
