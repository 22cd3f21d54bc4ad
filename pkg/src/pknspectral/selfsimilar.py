"""Integral solver for the degenerate self-similar boundary-value problem

    beta u0^3 (u + q*) = x u0^3 u' + 3 (u^3 u')',
    -3 u0^(-3/2) [u^3 u']_(x=0) = q0*,   u(1) = 0,

with ``u = u0 (1 - x)^(1/3) + du``. The ODE integrated twice over ``[x, 1]``
gives the fixed-point map ``du = G1 + G2``; integrated once over ``[0, 1]``
it gives the scalar equation ``G3(u0) = 0`` for the tip coefficient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigurationError,
    ConvergenceError,
    Mesh,
    TipAsymptotics,
    l2_relative_diff,
    safeguarded_newton,
    tail_integrals,
)

logger = logging.getLogger(__name__)

ROOT_RTOL = 1e-13
DEFAULT_MAX_ITER = 200
DIVERGENCE_LIMIT = 1e8


@dataclass
class SelfSimilarProblem:
    """Data of the self-similar BVP on a fixed mesh.

    The leak-off only enters multiplied by ``beta``; ``beta_ql_star`` may be
    given directly, which keeps ``beta = 0`` manufactured problems finite.

    ``tip`` (optional) declares the leak-off tip exponent. The tail integrals
    then factor out the known powers of ``1 - x`` (``zeta`` for ``du``,
    ``eta`` for the leak-off) instead of interpolating them.
    """

    beta: float
    q0_star: float
    ql_star: np.ndarray | None
    mesh: Mesh
    beta_ql_star: np.ndarray | None = None
    tip: TipAsymptotics | None = None

    @property
    def du_alpha(self):
        return None if self.tip is None else self.tip.zeta

    @property
    def q_alpha(self):
        return None if self.tip is None else self.tip.eta

    def __post_init__(self):
        n = self.mesh.N + 1
        if not self.q0_star > 0.0:
            raise ConfigurationError(f"q0* must be positive, got {self.q0_star}")
        if self.ql_star is None and self.beta_ql_star is None:
            self.ql_star = np.zeros(n)
        if self.beta_ql_star is None:
            self.ql_star = np.asarray(self.ql_star, dtype=float)
            self.beta_ql_star = self.beta * self.ql_star
        else:
            self.beta_ql_star = np.asarray(self.beta_ql_star, dtype=float)
            if self.ql_star is None:
                self.ql_star = self.beta_ql_star / self.beta if self.beta != 0.0 else np.full(n, np.nan)
        if self.beta_ql_star.shape != (n,):
            raise ConfigurationError("leak-off must be given at every mesh node")
        if not np.all(np.isfinite(self.beta_ql_star)):
            raise ConfigurationError("leak-off must be finite at the stored nodes")


@dataclass
class SelfSimilarSolution:
    u0: float
    delta_u: np.ndarray
    mesh: Mesh
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    @property
    def u(self) -> np.ndarray:
        return reconstruct_u(self.u0, self.delta_u, self.mesh)


def reconstruct_u(u0: float, delta_u, mesh: Mesh) -> np.ndarray:
    u = u0 * (1.0 - mesh.x) ** (1.0 / 3.0) + np.asarray(delta_u, dtype=float)
    u[-1] = 0.0
    return u


def _check_u0(u0):
    if not u0 > 0.0:
        raise ConfigurationError(f"tip coefficient must be positive, got {u0}")


def apply_G1(beta: float, u0: float, delta_u, mesh: Mesh, du_alpha=None) -> np.ndarray:
    """Nonlinear part of the fixed-point map plus the ``(2 + beta)`` tail moment."""
    _check_u0(u0)
    du = np.asarray(delta_u, dtype=float)
    one_minus = 1.0 - mesh.x
    r = one_minus ** (1.0 / 3.0)
    _, I1 = tail_integrals(mesh, du, du_alpha)
    nonlin = 6.0 * u0**2 * r**2 * du**2 + 4.0 * u0 * r * du**3 + du**4
    out = np.zeros_like(du)
    inner = slice(0, -1)
    out[inner] = (-0.75 * nonlin[inner] + (2.0 + beta) * u0**3 * I1[inner]) / (3.0 * u0**3 * one_minus[inner])
    return out


def apply_G2(beta: float, u0: float, delta_u, ql_star, mesh: Mesh, beta_ql_star=None,
             du_alpha=None, q_alpha=None) -> np.ndarray:
    """Linear part of the fixed-point map: inflow moment, leading-term
    source and the leak-off moment."""
    _check_u0(u0)
    du = np.asarray(delta_u, dtype=float)
    bq = beta * np.asarray(ql_star, dtype=float) if beta_ql_star is None else np.asarray(beta_ql_star)
    x = mesh.x
    one_minus = 1.0 - x
    I0_du, _ = tail_integrals(mesh, du, du_alpha)
    _, I1_q = tail_integrals(mesh, bq, q_alpha)
    out = np.zeros_like(du)
    inner = slice(0, -1)
    out[inner] = (x[inner] * I0_du[inner] + I1_q[inner]) / (3.0 * one_minus[inner])
    out[inner] += (3.0 * beta - 1.0) * u0 * one_minus[inner] ** (4.0 / 3.0) / 28.0
    return out


def g3_coefficients(beta, delta_u, beta_ql_star, mesh, du_alpha=None, q_alpha=None):
    """(a, b) with ``G3(u0) = a u0^(5/2) + b u0^(3/2) - q0*``."""
    int_du = tail_integrals(mesh, delta_u, du_alpha)[0][0]
    int_q = tail_integrals(mesh, beta_ql_star, q_alpha)[0][0]
    return 0.75 * (beta + 1.0), (beta + 1.0) * int_du + int_q


def g3_root(a: float, b: float, q0: float, guess: float | None = None, rtol=ROOT_RTOL) -> float:
    """Positive root of ``a u^(5/2) + b u^(3/2) - q0`` (q0 > 0).

    For ``a > 0`` the root is unique. For ``a <= 0`` the smaller positive root
    is returned, which continues the ``a > 0`` branch.
    """
    if not q0 > 0.0:
        raise ConfigurationError("q0* must be positive")

    def f(u):
        return a * u**2.5 + b * u**1.5 - q0

    def fp(u):
        return np.sqrt(u) * (2.5 * a * u + 1.5 * b)

    if a > 0.0:
        lo = max(-0.6 * b / a, 0.0)  # f is increasing beyond its stationary point
        if lo == 0.0:
            hi = guess if guess and guess > 0.0 else 1.0
        else:
            hi = 2.0 * lo
        while f(hi) <= 0.0:
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise ConvergenceError("no bracket for the tip coefficient")
    elif a == 0.0:
        if b <= 0.0:
            raise ConvergenceError("tip-coefficient equation has no positive root")
        return (q0 / b) ** (2.0 / 3.0)
    else:
        if b <= 0.0:
            raise ConvergenceError("tip-coefficient equation has no positive root")
        hi = -0.6 * b / a  # maximum of f
        if f(hi) < 0.0:
            raise ConvergenceError("tip-coefficient equation has no positive root")
        lo = 0.0
    return safeguarded_newton(f, fp, lo, hi, x0=guess, rtol=rtol)


def solve_u0(beta: float, delta_u, ql_star, q0_star: float, mesh: Mesh, beta_ql_star=None, guess=None,
             du_alpha=None, q_alpha=None) -> float:
    """Tip coefficient from the global balance ``G3(u0) = 0``."""
    if not q0_star > 0.0:
        raise ConfigurationError("q0* must be positive")
    bq = beta * np.asarray(ql_star, dtype=float) if beta_ql_star is None else beta_ql_star
    a, b = g3_coefficients(beta, delta_u, bq, mesh, du_alpha, q_alpha)
    return g3_root(a, b, q0_star, guess)


def fixed_point_map(problem: SelfSimilarProblem, u0, delta_u):
    return (apply_G1(problem.beta, u0, delta_u, problem.mesh, problem.du_alpha)
            + apply_G2(problem.beta, u0, delta_u, None, problem.mesh, problem.beta_ql_star,
                       problem.du_alpha, problem.q_alpha))


def solve_self_similar(problem: SelfSimilarProblem, eps: float = 1e-10, max_iter: int = DEFAULT_MAX_ITER,
                       delta_u0=None, raise_on_failure: bool = False) -> SelfSimilarSolution:
    """Alternate the tip-coefficient equation and the fixed-point update.

    Stops when the l2 relative change of ``du`` drops below ``eps``. On
    failure the last iterate is returned with ``converged=False`` (or a
    ``ConvergenceError`` carrying it is raised when ``raise_on_failure``).
    """
    mesh = problem.mesh
    du = np.zeros(mesh.N + 1) if delta_u0 is None else np.array(delta_u0, dtype=float)
    u0 = None
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            u0 = solve_u0(problem.beta, du, None, problem.q0_star, mesh, problem.beta_ql_star, guess=u0,
                          du_alpha=problem.du_alpha, q_alpha=problem.q_alpha)
        except ConvergenceError as exc:
            logger.debug("tip-coefficient equation failed at iteration %d: %s", it, exc)
            break
        du_new = fixed_point_map(problem, u0, du)
        if not np.all(np.isfinite(du_new)):
            break
        scale = np.linalg.norm(reconstruct_u(u0, du_new, mesh))
        change = np.linalg.norm(du_new - du)
        rel = change / np.linalg.norm(du_new) if np.any(du_new) else (0.0 if change == 0.0 else np.inf)
        history.append(rel)
        du = du_new
        if rel < eps:
            converged = True
            break
        if change > DIVERGENCE_LIMIT * scale:
            break
    sol = SelfSimilarSolution(u0=float(u0) if u0 is not None else np.nan, delta_u=du, mesh=mesh,
                              iterations=it, converged=converged, history=history)
    if not converged:
        logger.info("self-similar iteration stopped without convergence after %d iterations (beta=%g)",
                    it, problem.beta)
        if raise_on_failure:
            raise ConvergenceError("self-similar iteration did not converge", last=sol, iterations=it)
    return sol


def fixed_point_residual(problem: SelfSimilarProblem, sol: SelfSimilarSolution) -> float:
    """``||du - G1 - G2|| / ||u||`` at the returned iterate."""
    r = sol.delta_u - fixed_point_map(problem, sol.u0, sol.delta_u)
    return float(np.linalg.norm(r) / np.linalg.norm(sol.u))


__all__ = [
    "SelfSimilarProblem",
    "SelfSimilarSolution",
    "apply_G1",
    "apply_G2",
    "fixed_point_residual",
    "g3_root",
    "l2_relative_diff",
    "reconstruct_u",
    "solve_self_similar",
    "solve_u0",
]
