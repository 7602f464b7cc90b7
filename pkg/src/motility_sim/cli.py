"""Command-line entry point: ``run``, ``sweep`` and ``oracle`` subcommands."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from .config import load_config
from .errors import ConfigError, SimulationError
from .io import format_number
from .oracle import OdeState, ode_integrate
from .runner import EXIT_IO, run_command, sweep_command

THREADS_ENV = "MOTILITY_SIM_THREADS"
EXIT_CONFIG = 1


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logging.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return 1


def _d_values(text):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("D values must be positive")
    return sorted(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motility-sim", description=__doc__)
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker count for sweeps (default: ${THREADS_ENV} or 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (overrides output_dir)")

    sweep = sub.add_parser("sweep", help="repeat a run over several D values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--d-values", required=True, type=_d_values)

    oracle = sub.add_parser("oracle", help="print the homogeneous ODE trajectory as CSV")
    oracle.add_argument("--config", required=True)
    oracle.add_argument("--dt", type=float, default=1e-3)
    oracle.add_argument("--t-end", type=float, default=None, help="default: stop.max_time")
    oracle.add_argument("--every", type=int, default=1000, help="print every n-th RK4 step")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.command == "run":
        return run_command(cfg, args.out)

    if args.command == "sweep":
        summary = sweep_command(cfg, args.d_values, args.out, threads=_threads(args.threads))
        for row in summary["rows"]:
            print(f"D={format_number(row.d)} {row.classification} norm={format_number(row.final_norm)}")
        print(f"threshold_candidate={summary['threshold_candidate']}")
        return 0

    ini = cfg.initial
    t_end = cfg.stop.max_time if args.t_end is None else args.t_end
    try:
        traj = ode_integrate(OdeState(ini.u0, ini.v0, ini.w0), cfg.params, t_end, args.dt, every=args.every)
    except SimulationError as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return 3
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(("t", "u", "v", "w"))
    for row in zip(traj.t, traj.u, traj.v, traj.w):
        out.writerow([format_number(x) for x in row])
    return 0


if __name__ == "__main__":
    sys.exit(main())
