"""Command line entry point: ``resolvent-lab <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

from .config import load_config_file, merge_config
from .csvio import emit_csv
from .errors import ConfigError, DomainError, LabError
from .experiments import EXPERIMENTS

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _global_flags(p):
    p.add_argument("--config", help="key = value file; command-line options override it")
    p.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    p.add_argument("--workers", type=int, help="process count for sweep points (default 1)")
    p.add_argument("--out", help="CSV path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resolvent-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resolvent-sweep", help="||R(z)||_{p->q} lower bounds over Xi_delta on T^n")
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=int, help="grid points per axis")
    p.add_argument("--delta", type=float)
    p.add_argument("--zmax", type=float)
    p.add_argument("--zmin", type=float)
    p.add_argument("--radii", type=int, help="geometric radii per ray")
    p.add_argument("--parabola", type=int, help="points along the parabola boundary")
    p.add_argument("--z-list", help="explicit comma-separated z values, e.g. 4+1j,-3+2j")
    p.add_argument("--exterior", help="eigenvalue targeted by the exterior probe, or none")
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("bessel-check", help="K_m quadrature against a reference")
    p.add_argument("--m", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--re-min", type=float)
    p.add_argument("--re-max", type=float)
    p.add_argument("--im-min", type=float)
    p.add_argument("--im-max", type=float)

    p = sub.add_parser("parametrix-build", help="transport coefficients and kernel on a chart")
    p.add_argument("--metric", choices=["flat", "sphere", "file"])
    p.add_argument("--metric-file", help="n x n matrix for --metric file")
    p.add_argument("--n", type=int)
    p.add_argument("--N-order", type=int, dest="N_order")
    p.add_argument("--z", help="spectral parameter, e.g. 16 or -3+4j")
    p.add_argument("--grid", type=int, help="points per axis")
    p.add_argument("--box", type=float, help="grid covers [-box, box]^n")
    p.add_argument("--rho", type=float, help="cutoff radius")

    p = sub.add_parser("carleman-sweep", help="Carleman ratios over a tau list")
    p.add_argument("--tau-list")
    p.add_argument("--grid", help="points per axis, one value or N1,N2,N3")
    p.add_argument("--u", help="bump or mode:j,k")

    p = sub.add_parser("osc-decay", help="oscillatory operator norms over a lambda ladder")
    p.add_argument("--phase", choices=["distance", "bilinear"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--lambda-ladder")

    p = sub.add_parser("cluster-probe", help="spectral cluster norms on T^n")
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)

    for p in sub.choices.values():
        _global_flags(p)
    return parser


_GLOBAL = {"command", "config", "seed", "workers", "out"}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_params = load_config_file(args.config) if args.config else {}
        overrides = {k: v for k, v in vars(args).items() if k not in _GLOBAL}
        config = merge_config(args.command, file_params, overrides, args.seed, args.out, args.workers)
        table = EXPERIMENTS[args.command](config)
        emit_csv(table, config.out)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LabError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for key, value in table.summary.items():
        print(f"{key}: {value}", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
