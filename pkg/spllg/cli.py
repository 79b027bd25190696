"""Command line entry: ``python -m spllg {simulate|ensemble|sweep|verify}``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional, Sequence

from . import SOFTWARE
from .config import load_config
from .errors import ConfigError, InvalidArgument, SpllgError
from .events import log
from .harness import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    SWEEP_PARAMETERS,
    run_ensemble,
    run_simulate,
    run_sweep,
    run_verify,
)
from .verification import CHECKS, FAULTS


def _values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _names(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spllg", description="Stochastic SPLLG spectral-Galerkin simulator")
    parser.add_argument("--version", action="version", version=SOFTWARE)
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="JSON config or manifest.json; defaults apply when omitted")
        sub.add_argument("--seed", type=int, help="master seed, overrides the config")
        sub.add_argument("--out", required=True, help="output directory")
        sub.add_argument("--strict", action="store_true", help="escalate configuration warnings to errors")
        sub.add_argument("--registry", help="sqlite run registry (default: $SPLLG_REGISTRY)")

    common(commands.add_parser("simulate", help="single path"))
    common(commands.add_parser("ensemble", help="Monte Carlo ensemble"))
    sweep = commands.add_parser("sweep", help="one ensemble per parameter value")
    common(sweep)
    sweep.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument("--values", required=True, type=_values)
    verify = commands.add_parser("verify", help="invariant verification suite")
    common(verify)
    verify.add_argument("--checks", type=_names, help=f"subset of: {', '.join(CHECKS)}")
    verify.add_argument("--fault", choices=FAULTS, help="inject a known fault (test hook)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, strict=args.strict)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", f"must be >= 0, got {args.seed}")
            config = config.replace(seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "simulate":
            result = run_simulate(config, args.out, args.registry)
        elif args.command == "ensemble":
            result = run_ensemble(config, args.out, args.registry)
        elif args.command == "sweep":
            result = run_sweep(config, args.parameter, args.values, args.out, args.registry)
        else:
            result = run_verify(config, args.out, args.checks, args.fault, args.registry)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpllgError, OSError) as exc:
        log("ERROR", str(exc))
        return EXIT_FAILURE
    for failure in result.manifest.failures:
        print(f"path {failure.path_index} failed at t={failure.time:.6g}: {failure.reason}", file=sys.stderr)
    return result.exit_code
