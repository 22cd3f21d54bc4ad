"""Run configuration, error metrics, sweeps and file output.

Everything here works against the manufactured benchmarks: a run produces a
numeric trajectory (or a self-similar solution) and the matching exact
fields, and ``error_metrics`` reduces the pair to the error measures used
throughout (max pointwise relative errors at nodes strictly inside the
crack, the tip node being 0 in both).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .benchmarks import (
    BenchmarkFields,
    BenchmarkSpec,
    carter_amplitude,
    eval_benchmark,
    flux_function,
    leakoff_function,
    selfsimilar_benchmark,
)
from .core import ConfigurationError, ConvergenceError, Mesh, build_mesh, integrate
from .selfsimilar import SelfSimilarSolution, solve_self_similar
from .transient import (
    STABILIZERS,
    SolverConfig,
    TransientState,
    build_time_grid,
    initial_state,
    run_transient,
)

logger = logging.getLogger(__name__)

ZERO_WT_THRESHOLD = 1e-12
MODES = ("transient", "selfsimilar")
AXES = ("n", "k", "beta", "rho", "dt")

# solver-comparison preset: first-step control and tip treatment used for the reference rows
TABLE1_DT0 = 0.2
TABLE1_ROWS = ((1, 40), (2, 40), (1, 5), (2, 5))
TABLE1_REFERENCE = {
    (1, 40): dict(delta_L=5.2e-3, delta_w=3.7e-3, delta_V0=7.1e-3, delta_wt=7.5e-2, fd2=4.6e-2, fd3=2.0e-2),
    (2, 40): dict(delta_L=2.4e-5, delta_w=1.1e-4, delta_V0=3.2e-4, delta_wt=1.5e-3, fd2=4.6e-2, fd3=3.4e-3),
    (1, 5): dict(delta_L=5.2e-3, delta_w=3.7e-3, delta_V0=7.0e-3, delta_wt=7.5e-2, fd2=4.1e-2, fd3=2.0e-2),
    (2, 5): dict(delta_L=8.0e-5, delta_w=5.7e-4, delta_V0=6.3e-4, delta_wt=5.6e-2, fd2=6.3e-2, fd3=6.2e-2),
}


@dataclass
class RunConfig:
    """Everything needed to reproduce one run; mirrors the CLI flags."""

    mode: str = "transient"
    solver: int = 2
    benchmark: str = "s1"
    family: str = "power"
    gamma: float = 0.2
    a: float = 1.0
    u0: float | None = None
    beta: float = 1.0 / 3.0
    N: int = 40
    rho: float = 3.0
    K: int = 30
    t_final: float = 100.0
    dt0: float | None = None
    tol: float = 1e-10
    max_iter: int = 200
    max_inner: int = 5000
    two_term_tip: bool = False
    stabilizer: str = "newton"
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.solver not in (1, 2):
            raise ConfigurationError("solver must be 1 or 2")
        if self.benchmark not in ("s1", "carter"):
            raise ConfigurationError(f"unknown benchmark {self.benchmark!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError("N must be an integer >= 2")
        if not self.rho >= 1.0:
            raise ConfigurationError("rho must be >= 1")
        if int(self.K) != self.K or self.K < 2:
            raise ConfigurationError("K must be an integer >= 2")
        if not self.t_final > 0.0:
            raise ConfigurationError("t_final must be positive")
        if self.dt0 is not None and not 0.0 < self.dt0 < self.t_final / (self.K - 1):
            raise ConfigurationError("dt0 must satisfy 0 < dt0 < t_final/(K-1)")
        if not self.tol > 0.0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1 or self.max_inner < 1:
            raise ConfigurationError("iteration caps must be >= 1")
        if self.u0 is not None and not self.u0 > 0.0:
            raise ConfigurationError("u0 must be positive")
        if self.stabilizer not in STABILIZERS:
            raise ConfigurationError(f"stabilizer must be one of {STABILIZERS}")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # a full report: take its echo
        return cls.from_dict(data)


@dataclass
class ErrorReport:
    """Error measures of one run (``nan`` where a measure does not apply)."""

    delta_w: float
    delta_L: float = math.nan
    delta_wt: float = math.nan
    delta_u0: float = math.nan
    delta_V0: float = math.nan
    per_time: list = field(default_factory=list)
    per_node: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        keys = ("delta_w", "delta_L", "delta_wt", "delta_u0", "delta_V0")
        out = {k: getattr(self, k) for k in keys}
        for k in ("delta_wt_fd2", "delta_wt_fd3", "gamma_v", "iterations", "runtime"):
            if k in self.meta:
                out[k] = self.meta[k]
        return out

    def to_dict(self) -> dict:
        return {
            **{k: _jsonable(v) for k, v in self.summary().items()},
            "per_time": [{k: _jsonable(v) for k, v in row.items()} for row in self.per_time],
            "per_node": None if self.per_node is None else np.asarray(self.per_node).tolist(),
            "meta": {k: _jsonable(v) for k, v in self.meta.items()},
        }


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _rel(num, ex):
    return np.abs(num - ex) / np.abs(ex)


# ----------------------------------------------------------------------------
# benchmarks <-> runs


def benchmark_spec(cfg: RunConfig) -> BenchmarkSpec:
    """Benchmark described by ``cfg``; the Carter amplitude defaults to the
    value matching the velocity-spread target."""
    spec = BenchmarkSpec(family=cfg.family, gamma=cfg.gamma, a=cfg.a, shape=cfg.benchmark)
    if cfg.u0 is not None:
        return spec.with_u0(cfg.u0)
    if cfg.benchmark == "carter":
        return spec.with_u0(carter_amplitude(template=spec))
    return spec


def solver_config(cfg: RunConfig, spec: BenchmarkSpec) -> SolverConfig:
    return SolverConfig(variant=cfg.solver, eps=cfg.tol, max_inner=cfg.max_inner,
                        two_term_tip=cfg.two_term_tip, stabilizer=cfg.stabilizer,
                        leak_exponent=spec.leak_exponent if cfg.two_term_tip else None)


def benchmark_initial_state(spec: BenchmarkSpec, mesh: Mesh, t: float = 0.0) -> TransientState:
    """Exact benchmark data at ``t`` with ``w_t`` from the exact operator."""
    f = eval_benchmark(spec, t, mesh)
    op = spec.u0**4 * float(spec.psi(t)) ** 4 * spec.profile().operator(1.0 - mesh.x)
    op[-1] = 0.0
    return initial_state(f.w, f.w0, f.L, f.q_l, mesh, t=t, flux_operator=op)


def exact_fields(spec: BenchmarkSpec, times, mesh: Mesh) -> list[BenchmarkFields]:
    return [eval_benchmark(spec, float(t), mesh) for t in times]


def run_transient_case(cfg: RunConfig):
    """Run the transient benchmark of ``cfg``; returns ``(trajectory, exact, report)``."""
    import time

    if cfg.mode != "transient":
        raise ConfigurationError("run_transient_case needs mode='transient'")
    spec = benchmark_spec(cfg)
    mesh = build_mesh(cfg.N, cfg.rho)
    grid = build_time_grid(cfg.K, cfg.t_final, cfg.dt0)
    scfg = solver_config(cfg, spec)
    start = time.perf_counter()
    traj = run_transient(benchmark_initial_state(spec, mesh), grid, flux_function(spec),
                         leakoff_function(spec, mesh), scfg, mesh)
    elapsed = time.perf_counter() - start
    exact = exact_fields(spec, [s.t for s in traj], mesh)
    report = error_metrics(traj, exact)
    for scheme in (2, 3):
        report.meta[f"delta_wt_fd{scheme}"] = (fd_wt_error(traj, exact, scheme) if len(traj) >= scheme
                                               else math.nan)
    report.meta.update(
        config=cfg.to_dict(), u0=spec.u0, dt0=grid.dt0, runtime=elapsed,
        iterations=int(sum(s.inner_iterations for s in traj)),
        balance_residual=float(np.nanmax(np.abs(global_balance_residual(
            traj, flux_function(spec), leakoff_function(spec, mesh), mesh)))),
        tip_excluded=True,
    )
    return traj, exact, report


def run_selfsimilar_case(cfg: RunConfig):
    """Solve the self-similar benchmark of ``cfg``; returns ``(solution, exact_u, report)``."""
    mesh = build_mesh(cfg.N, cfg.rho)
    problem, exact_u = selfsimilar_benchmark(cfg.beta, mesh, u0=1.0 if cfg.u0 is None else cfg.u0,
                                             shape=cfg.benchmark)
    sol = solve_self_similar(problem, eps=cfg.tol, max_iter=cfg.max_iter)
    report = selfsimilar_metrics(sol, exact_u, 1.0 if cfg.u0 is None else cfg.u0)
    report.meta.update(config=cfg.to_dict(), iterations=sol.iterations, converged=sol.converged,
                       tip_excluded=True)
    if not sol.converged:
        raise ConvergenceError(f"self-similar iteration did not converge for beta={cfg.beta}",
                               last=(sol, report), iterations=sol.iterations)
    return sol, exact_u, report


def run_case(cfg: RunConfig) -> ErrorReport:
    if cfg.mode == "selfsimilar":
        return run_selfsimilar_case(cfg)[2]
    return run_transient_case(cfg)[2]


# ----------------------------------------------------------------------------
# metrics


def selfsimilar_metrics(sol: SelfSimilarSolution, exact_u, exact_u0: float) -> ErrorReport:
    rel = _rel(sol.u[:-1], np.asarray(exact_u)[:-1])
    return ErrorReport(delta_w=float(rel.max()), delta_u0=abs(sol.u0 - exact_u0) / exact_u0,
                       per_node=rel[None, :])


def error_metrics(numeric: Sequence[TransientState], exact: Sequence[BenchmarkFields]) -> ErrorReport:
    """Max-over-time errors plus their per-time values.

    Relative errors at nodes ``x_j < 1``; ``delta_wt`` is absolute when the
    exact derivative vanishes identically (stationary benchmark).
    """
    if len(numeric) != len(exact):
        raise ConfigurationError("trajectory and exact fields differ in length")
    if not numeric:
        raise ConfigurationError("empty trajectory")
    rows, nodes = [], []
    for s, e in zip(numeric, exact):
        if s.w.shape != e.w.shape:
            raise ConfigurationError("numeric and exact fields live on different meshes")
        if not math.isclose(s.t, e.t, rel_tol=1e-12, abs_tol=1e-14):
            raise ConfigurationError(f"time mismatch: {s.t} vs {e.t}")
        dw = _rel(s.w[:-1], e.w[:-1])
        if np.abs(e.w_t).max() < ZERO_WT_THRESHOLD:
            dwt = float(np.abs(s.w_t[:-1] - e.w_t[:-1]).max())
        else:
            dwt = float(_rel(s.w_t[:-1], e.w_t[:-1]).max())
        rows.append(dict(t=s.t, delta_w=float(dw.max()), delta_L=abs(s.L - e.L) / e.L, delta_wt=dwt,
                         delta_u0=abs(s.w0 - e.w0) / e.w0, delta_V0=abs(s.V0 - e.V0) / e.V0,
                         iterations=s.inner_iterations))
        nodes.append(dw)
    keys = ("delta_w", "delta_L", "delta_wt", "delta_u0", "delta_V0")
    agg = {k: max(r[k] for r in rows) for k in keys}
    return ErrorReport(**agg, per_time=rows, per_node=np.array(nodes))


def fd_postprocess_wt(trajectory: Sequence[TransientState], scheme: int = 2) -> np.ndarray:
    """Backward finite-difference ``w_t`` on the (non-uniform) time grid.

    Row ``i`` approximates ``w_t(t_i)``. The 3-point scheme is the
    variable-step backward formula (exact for quadratics in t). Rows without
    enough history (``i < scheme - 1``) are ``nan``.
    """
    if scheme not in (2, 3):
        raise ConfigurationError("FD scheme must be 2 or 3")
    need = scheme
    if len(trajectory) < need:
        raise ConfigurationError(f"{scheme}-point differences need at least {need} time points")
    t = np.array([s.t for s in trajectory])
    w = np.array([s.w for s in trajectory])
    out = np.full_like(w, np.nan)
    for i in range(scheme - 1, len(t)):
        h1 = t[i] - t[i - 1]
        if scheme == 2:
            out[i] = (w[i] - w[i - 1]) / h1
            continue
        h2 = t[i - 1] - t[i - 2]
        c0 = (2.0 * h1 + h2) / (h1 * (h1 + h2))
        c1 = -(h1 + h2) / (h1 * h2)
        c2 = h1 / (h2 * (h1 + h2))
        out[i] = c0 * w[i] + c1 * w[i - 1] + c2 * w[i - 2]
    return out


def fd_wt_error(trajectory, exact, scheme: int = 2) -> float:
    """Max error of the FD-postprocessed ``w_t`` (same conventions as ``error_metrics``)."""
    fd = fd_postprocess_wt(trajectory, scheme)
    worst = 0.0
    for i in range(scheme - 1, len(trajectory)):
        e = exact[i]
        if np.abs(e.w_t).max() < ZERO_WT_THRESHOLD:
            err = np.abs(fd[i, :-1] - e.w_t[:-1]).max()
        else:
            err = _rel(fd[i, :-1], e.w_t[:-1]).max()
        worst = max(worst, float(err))
    return worst


def global_balance_residual(trajectory: Sequence[TransientState], q0, ql, mesh: Mesh) -> np.ndarray:
    """Normalized residual of the global volume balance at each stored time.

    ``L(t) int w - L(0) int w(0) - int_0^t q0 + int_0^t L int q_l = 0``; the
    spatial integrals use the tail quadrature, the time integrals the
    trapezoidal rule over the stored states. Divided by ``L(t) int w(t)``.
    """
    t = np.array([s.t for s in trajectory])
    volume = np.array([s.L * integrate(mesh, s.w) for s in trajectory])
    inflow = np.array([q0(ti) for ti in t])
    loss = np.array([s.L * integrate(mesh, np.nan_to_num(ql(s.t), posinf=0.0, neginf=0.0))
                     for s in trajectory])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (inflow[1:] + inflow[:-1]
                                                             - loss[1:] - loss[:-1]))])
    res = volume - volume[0] - cum
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(volume != 0.0, res / volume, res)


# ----------------------------------------------------------------------------
# sweeps


def _axis_config(template: RunConfig, axis: str, value) -> RunConfig:
    if axis == "n":
        return template.replace(N=int(value))
    if axis == "k":
        return template.replace(K=int(value), dt0=None if template.dt0 is None else
                                min(template.dt0, 0.5 * template.t_final / (int(value) - 1)))
    if axis == "beta":
        return template.replace(beta=float(value), mode="selfsimilar")
    if axis == "rho":
        return template.replace(rho=float(value))
    if axis == "dt":
        # a single step of the given size
        return template.replace(K=2, t_final=float(value), dt0=0.5 * float(value), mode="transient")
    raise ConfigurationError(f"sweep axis must be one of {AXES}")


def _sweep_row(args):
    axis, value, cfg = args
    row = {"axis": axis, "value": value}
    try:
        report = run_case(cfg)
        row.update(status="ok", **report.summary())
    except ConvergenceError as exc:
        row.update(status="diverged", error=str(exc))
        last = exc.last
        if isinstance(last, tuple) and len(last) == 2 and isinstance(last[1], ErrorReport):
            row.update(iterations=last[1].meta.get("iterations"))
    except (ConfigurationError, ArithmeticError, ValueError) as exc:
        row.update(status="failed", error=str(exc))
    return row


def sweep(template: RunConfig, axis: str, values, max_workers: int | None = 1) -> list[dict]:
    """One run per value along ``axis``; rows come back in the order of ``values``.

    Runs are independent and may execute in worker processes
    (``max_workers > 1``). A failed run is recorded in its row
    (``status`` = ``diverged``/``failed``) and the sweep continues.
    """
    axis = axis.lower()
    if axis not in AXES:
        raise ConfigurationError(f"sweep axis must be one of {AXES}")
    jobs = [(axis, v, _axis_config(template, axis, v)) for v in values]
    if max_workers is None or max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


# ----------------------------------------------------------------------------
# output

SWEEP_COLUMNS = ("axis", "value", "status", "delta_w", "delta_L", "delta_wt", "delta_u0", "delta_V0",
                 "delta_wt_fd2", "delta_wt_fd3", "iterations", "runtime", "error")
TIME_COLUMNS = ("t", "delta_w", "delta_L", "delta_wt", "delta_u0", "delta_V0", "iterations")
TABLE1_COLUMNS = ("solver", "N", "K", "delta_L", "delta_w", "delta_V0", "delta_wt", "delta_wt_fd2",
                  "delta_wt_fd3", "ref_delta_L", "ref_delta_w", "ref_delta_V0", "ref_delta_wt",
                  "ref_fd2", "ref_fd3")
NODE_COLUMNS = ("t", "x", "rel_error")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if not math.isfinite(v) else repr(float(v))
    return str(v)


def _write_csv(path: Path, columns, rows):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row.get(c)) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit(obj, fmt: str, path, mesh_x=None) -> Path:
    """Write a report or a table of rows.

    ``fmt``: ``csv`` (per-time rows for a report, one row per entry for a
    table), ``json`` (full nested content with config echo) or ``long``
    (plot-ready ``t, x, rel_error`` rows of a report's spatial profile;
    needs ``mesh_x``).
    """
    path = Path(path)
    if fmt == "json":
        payload = obj.to_dict() if isinstance(obj, ErrorReport) else {"rows": [
            {k: _jsonable(v) for k, v in r.items()} for r in obj]}
        if isinstance(obj, ErrorReport) and "config" in obj.meta:
            payload["config"] = obj.meta["config"]
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        return path
    if fmt == "csv":
        if isinstance(obj, ErrorReport):
            _write_csv(path, TIME_COLUMNS, obj.per_time)
        else:
            rows = list(obj)
            columns = TABLE1_COLUMNS if rows and "ref_delta_L" in rows[0] else SWEEP_COLUMNS
            _write_csv(path, columns, rows)
        return path
    if fmt == "long":
        if not isinstance(obj, ErrorReport) or obj.per_node is None or mesh_x is None:
            raise ConfigurationError("long format needs a report with a spatial profile and mesh_x")
        times = [r["t"] for r in obj.per_time] or [math.nan]
        rows = [dict(t=t, x=x, rel_error=e) for t, prof in zip(times, obj.per_node)
                for x, e in zip(mesh_x[:-1], prof)]
        _write_csv(path, NODE_COLUMNS, rows)
        return path
    raise ConfigurationError(f"unknown output format {fmt!r}")


def table1(K: int = 30, t_final: float = 100.0, dt0: float = TABLE1_DT0, rows=TABLE1_ROWS,
           max_workers: int | None = 1) -> list[dict]:
    """Rows of the solver comparison on benchmark s1, gamma = 1/5, a = 1."""
    cfgs = [RunConfig(solver=v, N=n, K=K, t_final=t_final, dt0=dt0, two_term_tip=True) for v, n in rows]
    if max_workers is None or max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(run_case, cfgs))
    else:
        reports = [run_case(c) for c in cfgs]
    out = []
    for (v, n), rep in zip(rows, reports):
        ref = TABLE1_REFERENCE.get((v, n), {})
        out.append(dict(solver=v, N=n, K=K, delta_L=rep.delta_L, delta_w=rep.delta_w,
                        delta_V0=rep.delta_V0, delta_wt=rep.delta_wt,
                        delta_wt_fd2=rep.meta["delta_wt_fd2"], delta_wt_fd3=rep.meta["delta_wt_fd3"],
                        **{f"ref_{k}": ref.get(k) for k in ("delta_L", "delta_w", "delta_V0", "delta_wt")},
                        ref_fd2=ref.get("fd2"), ref_fd3=ref.get("fd3")))
    return out


__all__ = [
    "ErrorReport",
    "RunConfig",
    "benchmark_initial_state",
    "benchmark_spec",
    "emit",
    "error_metrics",
    "fd_postprocess_wt",
    "fd_wt_error",
    "global_balance_residual",
    "run_case",
    "run_selfsimilar_case",
    "run_transient_case",
    "sweep",
    "table1",
]
