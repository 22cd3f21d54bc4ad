"""Command-line entry point.

Usage examples::

    pknspectral selfsimilar --beta 0.3333 --n 100 --rho 3 --out ss.json
    pknspectral transient --solver 2 --benchmark s1 --gamma 0.2 --n 40 --k 30 --out run.csv
    pknspectral sweep --axis n --values 10,20,40,80 --mode selfsimilar --out sweep.csv
    pknspectral table1 --out table1.csv

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import ConfigurationError, ConvergenceError, build_mesh
from .harness import (
    AXES,
    TABLE1_DT0,
    RunConfig,
    emit,
    run_selfsimilar_case,
    run_transient_case,
    sweep,
    table1,
)

logger = logging.getLogger("pknspectral")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

# CLI flag -> RunConfig field
_FLAG_FIELDS = {
    "solver": "solver", "benchmark": "benchmark", "family": "family", "gamma": "gamma", "a": "a",
    "u0": "u0", "beta": "beta", "n": "N", "rho": "rho", "k": "K", "t_final": "t_final", "dt0": "dt0",
    "tol": "tol", "max_iter": "max_iter", "max_inner": "max_inner", "two_term_tip": "two_term_tip",
    "stabilizer": "stabilizer", "out": "out", "mode": "mode",
}


def _add_run_flags(p: argparse.ArgumentParser, transient: bool = True, selfsimilar: bool = True):
    p.add_argument("--config", type=Path, help="JSON file mirroring RunConfig; flags override it")
    p.add_argument("--benchmark", choices=("s1", "carter"))
    p.add_argument("--n", type=int, help="spatial intervals N")
    p.add_argument("--rho", type=float, help="mesh grading exponent")
    p.add_argument("--tol", type=float, help="stopping tolerance")
    p.add_argument("--u0", type=float, help="benchmark amplitude (Carter default: matched)")
    p.add_argument("--out", type=Path, help="output file (.csv or .json)")
    if selfsimilar:
        p.add_argument("--beta", type=float)
        p.add_argument("--max-iter", type=int)
    if transient:
        p.add_argument("--solver", type=int, choices=(1, 2))
        p.add_argument("--family", choices=("power", "exponential"))
        p.add_argument("--gamma", type=float)
        p.add_argument("--a", type=float, help="time offset of the power family")
        p.add_argument("--k", type=int, help="number of time points K")
        p.add_argument("--t-final", type=float)
        p.add_argument("--dt0", type=float, help="first-step control of the cubic time grid")
        p.add_argument("--max-inner", type=int)
        p.add_argument("--two-term-tip", action="store_true", default=None)
        p.add_argument("--stabilizer", choices=("newton", "viscous"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pknspectral",
                                     description="Integral solvers for the normalized PKN fracture model.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selfsimilar", help="solve the self-similar benchmark")
    _add_run_flags(p, transient=False)

    p = sub.add_parser("transient", help="run a transient benchmark")
    _add_run_flags(p, selfsimilar=False)

    p = sub.add_parser("sweep", help="one run per value along an axis")
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--mode", choices=("transient", "selfsimilar"))
    p.add_argument("--workers", type=int, default=1)
    _add_run_flags(p)

    p = sub.add_parser("table1", help="solver comparison rows on the s1 benchmark")
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--t-final", type=float, default=100.0)
    p.add_argument("--dt0", type=float, default=TABLE1_DT0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path)
    return parser


def config_from_args(args, mode: str) -> RunConfig:
    base = RunConfig.from_json(args.config).to_dict() if getattr(args, "config", None) else {"mode": mode}
    if getattr(args, "mode", None) is None:
        base.setdefault("mode", mode)
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[name] = str(value) if isinstance(value, Path) else value
    if not hasattr(args, "axis"):  # the subcommand fixes the mode
        base["mode"] = mode
    return RunConfig.from_dict(base)


def _parse_values(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse --values {text!r}") from exc


def _write(obj, out, mesh_x=None):
    if out is None:
        return
    out = Path(out)
    fmt = "json" if out.suffix == ".json" else "csv"
    emit(obj, fmt, out)
    if mesh_x is not None and fmt == "csv":
        emit(obj, "long", out.with_name(out.stem + "_profile.csv"), mesh_x=mesh_x)
    logger.info("wrote %s", out)


def _print_summary(summary: dict):
    for k, v in summary.items():
        print(f"{k:>14s}  {v:.3e}" if isinstance(v, float) else f"{k:>14s}  {v}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selfsimilar":
            cfg = config_from_args(args, "selfsimilar")
            sol, _, report = run_selfsimilar_case(cfg)
            _print_summary({"u0": sol.u0, **report.summary()})
            _write(report, cfg.out)
        elif args.command == "transient":
            cfg = config_from_args(args, "transient")
            _, _, report = run_transient_case(cfg)
            _print_summary(report.summary())
            _write(report, cfg.out, mesh_x=build_mesh(cfg.N, cfg.rho).x)
        elif args.command == "sweep":
            mode = args.mode or ("selfsimilar" if args.axis == "beta" else "transient")
            cfg = config_from_args(args, mode)
            values = _parse_values(args.values)
            if args.axis in ("n", "k"):
                values = [int(v) for v in values]
            rows = sweep(cfg, args.axis, values, max_workers=args.workers)
            for r in rows:
                dw = r.get("delta_w", float("nan"))
                print(f"{args.axis}={r['value']:<10g} {r['status']:<9s} delta_w={dw:.3e}")
            _write(rows, cfg.out)
        elif args.command == "table1":
            rows = table1(K=args.k, t_final=args.t_final, dt0=args.dt0, max_workers=args.workers)
            print(f"{'solver':>6} {'N':>3} {'dL':>9} {'dw':>9} {'dV0':>9} {'dwt':>9} {'FD2':>9} {'FD3':>9}")
            for r in rows:
                print(f"{r['solver']:>6} {r['N']:>3} {r['delta_L']:9.2e} {r['delta_w']:9.2e} "
                      f"{r['delta_V0']:9.2e} {r['delta_wt']:9.2e} {r['delta_wt_fd2']:9.2e} "
                      f"{r['delta_wt_fd3']:9.2e}")
                print(f"{'ref':>6} {'':>3} {r['ref_delta_L']:9.2e} {r['ref_delta_w']:9.2e} "
                      f"{r['ref_delta_V0']:9.2e} {r['ref_delta_wt']:9.2e} {r['ref_fd2']:9.2e} "
                      f"{r['ref_fd3']:9.2e}")
            _write(rows, args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
