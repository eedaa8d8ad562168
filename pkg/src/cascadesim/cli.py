"""Command-line entry point: ``python -m cascadesim <verb> [options]``.

Verbs map to the experiments module (sweep-alpha, phase-mc, hom, tomo).
Exit codes: 0 success, 2 configuration error, 3 numerical-contract violation.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .experiments import (ConfigError, load_config, midpoint_config, run_experiment,
                          with_ideal_input)
from .fock import FockError

VERBS = ("sweep-alpha", "phase-mc", "hom", "tomo")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _alpha_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadesim",
                                     description="Cascaded entanglement-swapping simulator")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="flat JSON config (default: measured-range midpoints)")
        p.add_argument("--out", default=".", help="output directory for CSV files")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--ideal-input", action="store_true",
                       help="use the four-photon input instead of SPDC pairs")
        if verb in ("sweep-alpha", "phase-mc"):
            p.add_argument("--alpha-sq", type=_alpha_list, help="comma-separated alpha^2 values")
        if verb == "phase-mc":
            p.add_argument("--n-sets", type=int, default=1000)
        if verb == "tomo":
            p.add_argument("--shots", type=int, default=10_000)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, midpoint_config()) if args.config else midpoint_config()
        if args.ideal_input:
            cfg = with_ideal_input(cfg)
        options = {}
        if getattr(args, "alpha_sq", None):
            options["alpha_sqs"] = args.alpha_sq
        if args.verb == "phase-mc":
            options["n_sets"] = args.n_sets
        if args.verb == "tomo":
            options["shots"] = args.shots
        manifest = run_experiment(args.verb, cfg, args.out, args.seed, **options)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FockError as exc:
        print(f"numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name in manifest.outputs:
        print(f"wrote {args.out}/{name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
