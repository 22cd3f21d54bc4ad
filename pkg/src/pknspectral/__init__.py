"""Integral solvers for the normalized PKN hydraulic-fracture model.

Modules
-------
core
    graded mesh, tail quadrature, normalization, scalar root finding
selfsimilar
    fixed-point solver of the degenerate self-similar BVP
transient
    time marching (solver 1: relaxed backward Euler; solver 2: trapezoidal)
benchmarks
    manufactured solutions used as oracles
harness
    error metrics, sweeps, output; ``cli`` wraps it
"""

from .benchmarks import BenchmarkSpec, carter_amplitude, eval_benchmark, gamma_v, selfsimilar_benchmark
from .core import (
    ConfigurationError,
    ConvergenceError,
    Mesh,
    NormalizationMap,
    TipAsymptotics,
    build_mesh,
    tail_integrals,
)
from .harness import ErrorReport, RunConfig, error_metrics, run_case, sweep
from .selfsimilar import SelfSimilarProblem, SelfSimilarSolution, solve_self_similar
from .transient import SolverConfig, TransientState, build_time_grid, run_transient, step_solver1, step_solver2

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSpec",
    "ConfigurationError",
    "ConvergenceError",
    "ErrorReport",
    "Mesh",
    "NormalizationMap",
    "RunConfig",
    "SelfSimilarProblem",
    "SelfSimilarSolution",
    "SolverConfig",
    "TipAsymptotics",
    "TransientState",
    "build_mesh",
    "build_time_grid",
    "carter_amplitude",
    "error_metrics",
    "eval_benchmark",
    "gamma_v",
    "run_case",
    "run_transient",
    "selfsimilar_benchmark",
    "solve_self_similar",
    "step_solver1",
    "step_solver2",
    "sweep",
    "tail_integrals",
]
