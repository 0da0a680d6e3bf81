"""Command-line entry point: ``svi-kit <experiment> [options]``."""

from __future__ import annotations

import argparse
import sys

from .core import ConfigError, ParameterError, SVIError
from .harness import GAMMA0_RULES, RUNNERS, SCHEME_NAMES, ExperimentSpec, ProblemSelector, ReportError, emit_report
from .problems import FAMILIES

COMMANDS = {
    "asymptotics": "natural residual of each instance along one run per scheme",
    "compare": "residual and wall-clock of ESA against MPSA variants",
    "rate": "empirical mean-squared error against the theoretical bound (rate-cournot)",
    "sweep": "mean-squared error across initial-steplength multipliers (rate-cournot)",
    "diagnose": "sampled pseudomonotonicity and strong-modulus estimate of the mean map",
}

DEFAULT_FAMILY = {
    "asymptotics": "frac-quad",
    "compare": "frac-quad",
    "rate": "rate-cournot",
    "sweep": "rate-cournot",
    "diagnose": "rate-cournot",
}

DEFAULT_SCHEMES = {
    "compare": ["ESA", "MPSA-entropy", "MPSA-powersum"],
}


def int_list(text):
    """Parse ``"5"``, ``"5,7,9"`` or the inclusive range ``"5..10"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def float_list(text):
    return [float(p) for p in text.split(",") if p.strip()]


def seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="svi-kit", description="Stochastic VI solver benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--family", choices=FAMILIES, default=DEFAULT_FAMILY[name])
        p.add_argument("--n", type=int_list, default=None,
                       help="dimensions (or Watson q indices), e.g. 10..19 or 5,7")
        p.add_argument("--scheme", action="append", choices=SCHEME_NAMES, default=None,
                       help="scheme to run; repeat for several")
        p.add_argument("--gamma0", type=float, default=None)
        p.add_argument("--gamma0-rule", choices=GAMMA0_RULES, default="default")
        p.add_argument("--iters", type=int, default=15000 if name != "rate" else 10000)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--seed", type=seed, default=0)
        p.add_argument("--checkpoints", type=int_list, default=None)
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json", "plot-data"), default="csv")
        p.add_argument("--kappa", type=float, default=0.5, help="Cournot price exponent")
        p.add_argument("--instance-seed", type=seed, default=0)
        p.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            p.add_argument("--multipliers", type=float_list, default=[0.001, 0.01, 0.1, 1, 10, 100])
        if name == "diagnose":
            p.add_argument("--pairs", type=int, default=1000)
        if name in ("asymptotics", "compare"):
            p.add_argument("--noiseless", action="store_true", help="replace the sampled map by the mean map")
    return parser


def spec_from_args(args):
    schemes = args.scheme or DEFAULT_SCHEMES.get(args.command, ["ESA"])
    extra = {}
    if args.command == "sweep":
        extra["multipliers"] = tuple(args.multipliers)
    if args.command == "diagnose":
        extra["pairs"] = args.pairs
    if getattr(args, "noiseless", False):
        extra["noise"] = False
    return ExperimentSpec(
        kind=args.command,
        selector=ProblemSelector(args.family, args.n, args.kappa, args.instance_seed),
        schemes=tuple(schemes),
        gamma0=args.gamma0,
        gamma0_rule=args.gamma0_rule,
        iterations=args.iters,
        paths=args.paths,
        checkpoints=args.checkpoints,
        master_seed=args.seed,
        workers=args.workers,
        **extra,
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        report = RUNNERS[args.command](spec)
        text = emit_report(report, args.format, args.out)
    except (ConfigError, ParameterError, ReportError) as exc:
        print(f"svi-kit: configuration error: {exc}", file=sys.stderr)
        return 2
    except (SVIError, OSError) as exc:
        print(f"svi-kit: {exc}", file=sys.stderr)
        return 1
    if args.out is None:
        sys.stdout.write(text)
    if report.errors:
        print(f"svi-kit: {report.errors} instance errors", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
