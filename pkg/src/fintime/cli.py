"""Command-line entry point: ``fintime {run,integrate,validate,resolve-gnf2}``.

Vectors are comma-separated reals without spaces, e.g. ``--x0 0,0``.
Exit codes: 0 success, 1 validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import FintimeError
from .experiments import (
    ConfigError,
    load_config,
    parse_vector,
    resolve_gnf2_formula,
    run_experiment,
    summarize_resolution,
    write_outputs,
    write_trajectory_csv,
)
from .flows import FlowConfig, Gnf2Law, Variant, tune_c
from .integrator import IntegratorOptions, integrate, measure_settling
from .objective import SHIPPED
from . import validation

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _vector(text: str) -> np.ndarray:
    try:
        return parse_vector(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fintime", description="Prescribed finite-time optimization flows.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{run,integrate,validate,resolve-gnf2}")

    run = sub.add_parser("run", help="run an experiment config and write CSV + JSON")
    run.add_argument("config", help="experiment config file (key = value lines)")
    run.add_argument("-o", "--out", default=None, help="output directory (default: config's output_dir or '.')")
    run.add_argument("--force", action="store_true", help="overwrite existing output files")
    run.add_argument("--threads", type=int, default=None, help="worker threads (default: FINTIME_THREADS or CPU count)")

    integ = sub.add_parser("integrate", help="integrate a single trajectory")
    integ.add_argument("--objective", choices=sorted(SHIPPED), default="rosenbrock", help="objective function")
    integ.add_argument("--a", type=float, default=2.0, help="Rosenbrock parameter a")
    integ.add_argument("--b", type=float, default=50.0, help="Rosenbrock parameter b")
    integ.add_argument("--diag", type=_vector, default=None, help="diagonal of Q for quadratic-diag")
    integ.add_argument("--flow", choices=[v.value for v in Variant], default="gnf1", help="flow variant")
    integ.add_argument("--c", type=float, default=1.0, help="gain c")
    integ.add_argument("--p", type=float, default=1.0, help="exponent p in [1, 2)")
    integ.add_argument("--r", type=float, default=0.0, help="Hessian power r")
    integ.add_argument("--T", type=float, default=None, help="prescribed settling time; overrides --c")
    integ.add_argument("--x0", type=_vector, required=True, help="initial point, e.g. 0,0")
    integ.add_argument("--t-max", type=float, default=10.0, help="integration horizon")
    integ.add_argument("--epsilon", type=float, default=1e-9, help="gradient-norm stopping threshold")
    integ.add_argument("--csv", default=None, help="write the trajectory to this CSV file")
    integ.add_argument("--force", action="store_true", help="overwrite an existing CSV file")

    val = sub.add_parser("validate", help="check derivatives and the settling-time envelope")
    val.add_argument("--points", type=int, default=20, help="random points per objective")
    val.add_argument("--seed", type=int, default=0, help="random seed")

    res = sub.add_parser("resolve-gnf2", help="decide empirically which GNF2 settling law holds")
    res.add_argument("--p-grid", type=_vector, default=np.array([1.0, 1.25, 1.5, 1.75]), help="exponents p")
    res.add_argument("--c", type=float, default=1.0, help="gain c")
    res.add_argument("--r", type=float, default=0.0, help="Hessian power r")
    res.add_argument("--x0", type=_vector, default=np.array([1.0, -1.0]), help="initial point on quadratic Q = I")
    res.add_argument("--tol", type=float, default=0.01, help="relative tolerance for a match")
    res.add_argument("--json", default=None, help="also write the verdicts to this JSON file")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir or "."
    report, trajectories = run_experiment(cfg, threads=args.threads)
    written = write_outputs(cfg, report, trajectories, out_dir, force=args.force)
    for rec in report.runs:
        settle = "-" if rec.measured_settling is None else f"{rec.measured_settling:.9f}"
        print(f"run {rec.index}: x0={rec.x0} {rec.termination} settling={settle}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _make_objective(args):
    if args.objective == "rosenbrock":
        return SHIPPED["rosenbrock"](a=args.a, b=args.b)
    if args.objective == "quadratic-diag":
        diag = args.diag if args.diag is not None else np.array([1.0, 4.0])
        return SHIPPED["quadratic-diag"](diag=tuple(diag))
    return SHIPPED["quadratic-identity"](dim=len(args.x0))


def _cmd_integrate(args) -> int:
    obj = _make_objective(args)
    cfg = FlowConfig(Variant(args.flow), args.c, args.p, args.r)
    if args.T is not None:
        cfg = cfg.with_gain(tune_c(obj, args.x0, cfg.p, cfg.variant, args.T, Gnf2Law.DERIVED))
    opts = IntegratorOptions(t_max=args.t_max, stop_grad_norm=args.epsilon)
    if args.csv and Path(args.csv).exists() and not args.force:
        raise FileExistsError(f"refusing to overwrite {args.csv} (use --force)")
    traj = integrate(obj, cfg, args.x0, opts)
    print(f"termination: {traj.termination.value}")
    print(f"t_final: {traj.t[-1]:.17g}")
    print("x_final: " + ",".join(f"{v:.17g}" for v in traj.x[-1]))
    print(f"grad_norm: {traj.grad_norm_2[-1]:.3e}")
    if traj.converged:
        print(f"settling: {measure_settling(traj, args.epsilon):.17g}")
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, args.csv)
    return EXIT_OK


def _cmd_validate(args) -> int:
    checks = validation.run_all(args.points, args.seed)
    for check in checks:
        print(check.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


def _cmd_resolve(args) -> int:
    obj = SHIPPED["quadratic-identity"](dim=len(args.x0))
    verdicts = resolve_gnf2_formula(obj, args.x0, list(args.p_grid), args.c, args.r, tol=args.tol)
    summary = summarize_resolution(verdicts)
    for v in verdicts:
        errs = ", ".join(f"{s['source']}={s['relative_error']:.2e}" for s in v["sources"])
        print(f"p={v['p']:g}: {v['termination']} measured={v['measured_settling']} [{errs}] winner={v['winner']}")
    print(f"consistent winner: {summary['winner']}")
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if summary["consistent"] else EXIT_FAILED


_COMMANDS = {"run": _cmd_run, "integrate": _cmd_integrate, "validate": _cmd_validate, "resolve-gnf2": _cmd_resolve}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, FileExistsError, FintimeError, ValueError) as exc:
        print(f"fintime {args.command}: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
