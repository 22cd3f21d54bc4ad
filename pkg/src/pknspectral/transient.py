"""Time marching for the normalized transient PKN problem.

Each step from ``t_j`` to ``t_{j+1} = t_j + dt`` recasts the governing
equation at ``t_{j+1}``

    3 L^2 (W_t + q_l) = x W0^3 W' + 3 (W^3 W')'

as the self-similar BVP by expressing ``W_t`` through ``W`` and known data,
then inverts it with the self-similar fixed-point machinery while the crack
length follows from the trapezoidal rule applied to ``L' = W0^3 / (3 L)``.

solver 1
    ``W_t`` is relaxed toward the backward difference with the weight
    ``sigma`` that pins the inner similarity parameter to 1/3.
solver 2
    ``W_t = 2 (W - w)/dt - w_t`` (second order). The similarity parameter
    becomes ``6 L^2 / (dt W0^3)``, far outside the window where the plain
    fixed-point map contracts. The default inner solver is a damped Newton
    iteration on the same discrete ``(du, W0)`` system; the "viscous"
    add-and-subtract preconditioner is kept as an alternative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import (
    ConfigurationError,
    ConvergenceError,
    Mesh,
    TipAsymptotics,
    l2_relative_diff,
    quadrature_matrices,
    singular_quadrature_matrices,
    tail_integrals,
)
from .selfsimilar import apply_G1, apply_G2, g3_coefficients, g3_root

logger = logging.getLogger(__name__)

FluxFunction = Callable[[float], float]
LeakoffFunction = Callable[[float], np.ndarray]


class StepFailure(ConvergenceError):
    """A time step whose inner iteration could not be completed."""


@dataclass(frozen=True)
class TransientState:
    t: float
    w: np.ndarray
    w_t: np.ndarray
    w0: float
    L: float
    inner_iterations: int = 0

    @property
    def V0(self) -> float:
        return crack_speed(self.w0, self.L)


def crack_speed(w0: float, L: float) -> float:
    if not L > 0.0:
        raise ConfigurationError("crack length must be positive")
    return w0**3 / (3.0 * L)


@dataclass(frozen=True)
class TimeGrid:
    K: int
    t_K: float
    dt0: float
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ConfigurationError("time grid needs K >= 2 points")
        if not self.t_K > 0.0:
            raise ConfigurationError("final time must be positive")
        if not 0.0 < self.dt0 < self.t_K / (self.K - 1):
            raise ConfigurationError(f"first-step control must satisfy 0 < dt0 < t_K/(K-1) = {self.t_K / (self.K - 1)}")
        i = np.arange(self.K, dtype=float)
        c = (self.t_K - (self.K - 1) * self.dt0) / (self.K - 1) ** 3
        times = i * self.dt0 + c * i**3
        times[0], times[-1] = 0.0, self.t_K
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


def default_dt0(K: int, t_K: float) -> float:
    return t_K / (10.0 * (K - 1))


def build_time_grid(K: int, t_K: float, dt0: float | None = None) -> TimeGrid:
    """Cubic time grid ``t_i = i dt0 + (t_K - (K-1) dt0) i^3 / (K-1)^3``, i = 0..K-1."""
    return TimeGrid(K, t_K, default_dt0(K, t_K) if dt0 is None else dt0)


STABILIZERS = ("newton", "viscous")


@dataclass(frozen=True)
class SolverConfig:
    variant: int = 2
    eps: float = 1e-10
    max_inner: int = 5000
    two_term_tip: bool = False
    retry_halving: bool = True
    stabilizer: str = "newton"
    leak_exponent: float | None = None

    @property
    def tip(self) -> TipAsymptotics | None:
        return None if self.leak_exponent is None else TipAsymptotics(self.leak_exponent)

    @property
    def du_alpha(self):
        """Power factored out of ``dW`` in the tail integrals (two-term mode)."""
        return self.tip.zeta if self.two_term_tip else None

    @property
    def q_alpha(self):
        """Power factored out of the effective leak-off, which always
        contains the opening itself."""
        return None if self.leak_exponent is None else min(1.0 / 3.0, self.leak_exponent)

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ConfigurationError("solver variant must be 1 or 2")
        if not self.eps > 0.0:
            raise ConfigurationError("eps must be positive")
        if self.max_inner < 1:
            raise ConfigurationError("max_inner must be >= 1")
        if self.two_term_tip and self.leak_exponent is None:
            raise ConfigurationError("two_term_tip needs the leak-off tip exponent (leak_exponent)")
        if self.stabilizer not in STABILIZERS:
            raise ConfigurationError(f"stabilizer must be one of {STABILIZERS}")


def tip_profile(mesh: Mesh) -> np.ndarray:
    return (1.0 - mesh.x) ** (1.0 / 3.0)


def _ds(mesh: Mesh, f: np.ndarray) -> np.ndarray:
    """Second-order finite difference d/ds on the uniform s grid."""
    return np.gradient(f, mesh.h, edge_order=2)


def initial_derivative(w, w0: float, L: float, ql, mesh: Mesh, flux_operator=None) -> np.ndarray:
    """``w_t`` from the governing equation at a known state.

    ``flux_operator`` may supply ``x w0^3 w_x + 3 (w^3 w_x)_x`` exactly (for
    benchmark initial data); otherwise both terms are formed by finite
    differences in the uniform coordinate s, where the tip power law of w is
    smooth for the graded mesh. The tip value is 0.
    """
    if not L > 0.0:
        raise ConfigurationError("crack length must be positive")
    w = np.asarray(w, dtype=float)
    ql = np.asarray(ql, dtype=float)
    if flux_operator is None:
        J = mesh.jacobian
        ws = _ds(mesh, w)
        inner = slice(0, -1)
        wx = np.zeros_like(w)
        wx[inner] = ws[inner] / J[inner]
        flux = w**3 * wx
        # w^3 w_x stays finite at the tip; its s-derivative is smooth
        flux[-1] = 0.0 if mesh.rho == 1 else flux[-1]
        dflux = np.zeros_like(w)
        dflux[inner] = _ds(mesh, flux)[inner] / J[inner]
        rhs = mesh.x * w0**3 * wx + 3.0 * dflux
    else:
        rhs = np.asarray(flux_operator, dtype=float)
    wt = rhs / (3.0 * L**2) - ql
    wt[-1] = 0.0
    return wt


def initial_state(w, w0: float, L: float, ql, mesh: Mesh, t: float = 0.0, flux_operator=None) -> TransientState:
    """State at the start of a run with ``w_t`` taken from the governing equation."""
    w = np.asarray(w, dtype=float)
    wt = initial_derivative(w, w0, L, ql, mesh, flux_operator=flux_operator)
    return TransientState(t=t, w=w.copy(), w_t=wt, w0=float(w0), L=float(L))


# ----------------------------------------------------------------------------
# inner-iteration building blocks


def decompose(W, W0, mesh):
    dW = np.asarray(W, dtype=float) - W0 * tip_profile(mesh)
    dW[-1] = 0.0
    return dW


def _tip_rate(w_t, mesh):
    """Estimate of dW0/dt from the derivative next to the tip."""
    r = tip_profile(mesh)
    return float(w_t[-2] / r[-2])


def trapezoidal_rate(W, w, w_t, dt):
    """Time derivative at the new level implied by the trapezoidal rule,
    ``2 (W - w) / dt - w_t`` (second order in ``dt``)."""
    return 2.0 * (np.asarray(W, dtype=float) - w) / dt - w_t


def _lengthen(L_prev, w0_prev, W0, dt):
    return float(np.sqrt(L_prev**2 + dt / 3.0 * (W0**3 + w0_prev**3)))


VISCOUS_FALLBACK = (0.0, 0.5)  # exact fit for a constant dW
ILL_CONDITIONED = 1e10


def _viscous_fit(mesh, dW, alpha=None):
    """Least-squares C0, C1 with (1-x)(C0 + C1(1-x)) dW ~ int_x^1 (xi-x) dW.

    Returns ``c(x) = C0 + C1 (1 - x)`` at the nodes (tip excluded from the
    fit), the constants, and the condition number of the scaled fit.
    """
    one_minus = 1.0 - mesh.x
    _, I1 = tail_integrals(mesh, dW, alpha)
    inner = slice(0, -1)
    A = np.column_stack([one_minus[inner] * dW[inner], one_minus[inner] ** 2 * dW[inner]])
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale <= 1e-14 * max(1.0, np.abs(dW).max())) or not np.all(np.isfinite(A)):
        return VISCOUS_FALLBACK[0] + VISCOUS_FALLBACK[1] * one_minus, VISCOUS_FALLBACK, np.inf
    cond = np.linalg.cond(A / scale)
    if cond > ILL_CONDITIONED:
        logger.warning("ill-conditioned viscous fit (cond=%.3g); using the fallback constants", cond)
        return VISCOUS_FALLBACK[0] + VISCOUS_FALLBACK[1] * one_minus, VISCOUS_FALLBACK, cond
    coef, *_ = np.linalg.lstsq(A / scale, I1[inner], rcond=None)
    C0, C1 = coef / scale
    return C0 + C1 * one_minus, (C0, C1), cond


@dataclass
class InnerRecord:
    """State seen by one inner iteration (for diagnostics and tests)."""

    dt: float
    sigma: float
    beta: float
    W0: float
    L: float
    change: float


def _inner_loop(state: TransientState, dt, q0v, ql1, mesh, cfg, variant, records=None):
    r = tip_profile(mesh)
    w, wt, w0, Lj = state.w, state.w_t, state.w0, state.L
    W = w + wt * dt
    W0 = max(w0 + _tip_rate(wt, mesh) * dt, 0.5 * w0)
    L = Lj
    Wt = wt.copy()
    dW = decompose(W, W0, mesh)
    for it in range(1, cfg.max_inner + 1):
        if not (W0 > 0.0 and L > 0.0 and np.isfinite(W0)):
            raise StepFailure(f"nonpositive tip coefficient or length at t={state.t + dt:g}", iterations=it)
        q0_star = 3.0 * q0v * W0**-1.5 * L
        if variant == 1:
            sigma = dt * W0**3 / (9.0 * L**2)
            beta = 3.0 * sigma * L**2 / (dt * W0**3)
            if not 0.0 < sigma:
                raise StepFailure("negative relaxation weight", iterations=it)
            bq = beta * (-w + dt / sigma * ((1.0 - sigma) * Wt + ql1))
        else:
            sigma = 2.0
            beta = 6.0 * L**2 / (dt * W0**3)
            bq = beta * (-w - 0.5 * dt * (wt - ql1))
        if records is not None:
            records.append(InnerRecord(dt=dt, sigma=sigma, beta=beta, W0=W0, L=L, change=np.nan))
        a, b = g3_coefficients(beta, dW, bq, mesh, cfg.du_alpha, cfg.q_alpha)
        try:
            W0_new = g3_root(a, b, q0_star, guess=W0)
        except ConvergenceError as exc:
            raise StepFailure(f"tip-coefficient equation failed: {exc}", iterations=it) from exc
        G = (apply_G1(beta, W0_new, dW, mesh, cfg.du_alpha)
             + apply_G2(beta, W0_new, dW, None, mesh, bq, cfg.du_alpha, cfg.q_alpha))
        if variant == 1:
            dW_new = G
        else:
            c, _, _ = _viscous_fit(mesh, dW, cfg.du_alpha)
            visc = beta * c
            dW_new = (3.0 * G + visc * dW) / (3.0 + visc)
            dW_new[-1] = 0.0
        L_new = _lengthen(Lj, w0, W0_new, dt)
        W_new = W0_new * r + dW_new
        W_new[-1] = 0.0
        if variant == 1:
            sigma_new = dt * W0_new**3 / (9.0 * L_new**2)
            Wt_new = sigma_new * (W_new - w) / dt + (1.0 - sigma_new) * Wt
        else:
            Wt_new = trapezoidal_rate(W_new, w, wt, dt)
        Wt_new[-1] = 0.0
        if not np.all(np.isfinite(W_new)):
            raise StepFailure(f"non-finite iterate at t={state.t + dt:g}", iterations=it)
        change = max(l2_relative_diff(W_new, W), abs(L_new - L) / L_new)
        if records is not None:
            records[-1].change = change
        W, W0, dW, L, Wt = W_new, W0_new, dW_new, L_new, Wt_new
        if change < cfg.eps:
            return TransientState(t=state.t + dt, w=W, w_t=Wt, w0=W0, L=L, inner_iterations=it)
        if change > 1e6:
            break
    raise StepFailure(f"inner iteration did not converge at t={state.t + dt:g}",
                      last=TransientState(t=state.t + dt, w=W, w_t=Wt, w0=W0, L=L), iterations=it)


def _tail_matrices(mesh: Mesh, alpha):
    return quadrature_matrices(mesh) if alpha is None else singular_quadrature_matrices(mesh, float(alpha))


def _newton_system(dW, W0, ctx):
    """Residual of the merged (du, u0) system for one solver-2 step."""
    mesh, Lj, w0, dt, q0v, qhat, cfg = ctx
    L = _lengthen(Lj, w0, W0, dt)
    beta = 6.0 * L**2 / (dt * W0**3)
    bq = beta * qhat
    G = (apply_G1(beta, W0, dW, mesh, cfg.du_alpha)
         + apply_G2(beta, W0, dW, None, mesh, bq, cfg.du_alpha, cfg.q_alpha))
    a, b = g3_coefficients(beta, dW, bq, mesh, cfg.du_alpha, cfg.q_alpha)
    g3 = a * W0**2.5 + b * W0**1.5 - 3.0 * q0v * W0**-1.5 * L
    return np.append(dW - G, g3), beta, L


def _newton_jacobian(dW, W0, beta, F0, ctx):
    mesh, cfg = ctx[0], ctx[-1]
    A0, A1 = _tail_matrices(mesh, cfg.du_alpha)
    n = mesh.N + 1
    x = mesh.x
    one_minus = 1.0 - x
    r = one_minus ** (1.0 / 3.0)
    J = np.zeros((n + 1, n + 1))
    inner = slice(0, -1)
    dnl = 12.0 * W0**2 * r**2 * dW + 12.0 * W0 * r * dW**2 + 4.0 * dW**3
    denom = 3.0 * one_minus[inner]
    dG = ((2.0 + beta) * A1[inner] + x[inner, None] * A0[inner]) / denom[:, None]
    dG[np.arange(n - 1), np.arange(n - 1)] -= 0.75 * dnl[inner] / (W0**3 * denom)
    J[:n, :n] = np.eye(n)
    J[:n - 1, :n] -= dG
    J[n, :n] = (beta + 1.0) * W0**1.5 * A0[0]
    # the W0 column also carries the L(W0) and beta(W0) dependence
    h = 1e-7 * W0
    F1, _, _ = _newton_system(dW, W0 + h, ctx)
    J[:, n] = (F1 - F0) / h
    return J


def _newton_inner(state: TransientState, dt, q0v, ql1, mesh, cfg, records=None):
    """Solver 2 inner solve by damped Newton on ``(du, W0)``.

    The unknowns are the same as in the fixed-point form and so is the
    discrete system; only the way it is solved differs. The predictor supplies
    the starting point; steps are halved until W0 stays positive and the
    residual decreases.
    """
    r = tip_profile(mesh)
    w, wt, w0, Lj = state.w, state.w_t, state.w0, state.L
    qhat = -w - 0.5 * dt * (wt - ql1)
    ctx = (mesh, Lj, w0, dt, q0v, qhat, cfg)
    W0 = max(w0 + _tip_rate(wt, mesh) * dt, 0.5 * w0)
    dW = decompose(w + wt * dt, W0, mesh)
    W = W0 * r + dW
    L = _lengthen(Lj, w0, W0, dt)
    F, beta, _ = _newton_system(dW, W0, ctx)
    for it in range(1, cfg.max_inner + 1):
        J = _newton_jacobian(dW, W0, beta, F, ctx)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise StepFailure(f"singular inner Jacobian at t={state.t + dt:g}", iterations=it) from exc
        norm0 = np.linalg.norm(F)
        lam = 1.0
        for _ in range(40):
            W0_try = W0 + lam * step[-1]
            if W0_try > 0.0:
                dW_try = dW + lam * step[:-1]
                dW_try[-1] = 0.0
                F_try, beta_try, L_try = _newton_system(dW_try, W0_try, ctx)
                if np.all(np.isfinite(F_try)) and (np.linalg.norm(F_try) < norm0 or lam < 1e-3):
                    break
            lam *= 0.5
        else:
            raise StepFailure(f"no admissible Newton step at t={state.t + dt:g}", iterations=it)
        if records is not None:
            records.append(InnerRecord(dt=dt, sigma=2.0, beta=beta_try, W0=W0_try, L=L_try, change=np.nan))
        W_new = W0_try * r + dW_try
        W_new[-1] = 0.0
        change = max(l2_relative_diff(W_new, W), abs(L_try - L) / L_try)
        if records is not None:
            records[-1].change = change
        W, W0, dW, L, F, beta = W_new, W0_try, dW_try, L_try, F_try, beta_try
        if change < cfg.eps or np.linalg.norm(F) == 0.0:
            Wt = trapezoidal_rate(W, w, wt, dt)
            Wt[-1] = 0.0
            return TransientState(t=state.t + dt, w=W, w_t=Wt, w0=W0, L=L, inner_iterations=it)
    Wt = trapezoidal_rate(W, w, wt, dt)
    raise StepFailure(f"inner Newton iteration did not converge at t={state.t + dt:g}",
                      last=TransientState(t=state.t + dt, w=W, w_t=Wt, w0=W0, L=L), iterations=it)


def step_solver1(state, dt, q0, ql, cfg: SolverConfig, mesh: Mesh, records=None) -> TransientState:
    if not dt > 0.0:
        raise ConfigurationError("time step must be positive")
    t1 = state.t + dt
    return _inner_loop(state, dt, q0(t1), np.asarray(ql(t1), dtype=float), mesh, cfg, 1, records)


def step_solver2(state, dt, q0, ql, cfg: SolverConfig, mesh: Mesh, records=None) -> TransientState:
    if not dt > 0.0:
        raise ConfigurationError("time step must be positive")
    t1 = state.t + dt
    ql1 = np.asarray(ql(t1), dtype=float)
    if cfg.stabilizer == "newton":
        return _newton_inner(state, dt, q0(t1), ql1, mesh, cfg, records)
    return _inner_loop(state, dt, q0(t1), ql1, mesh, cfg, 2, records)


def _step(state, dt, q0, ql, cfg, mesh):
    stepper = step_solver1 if cfg.variant == 1 else step_solver2
    try:
        return [stepper(state, dt, q0, ql, cfg, mesh)]
    except StepFailure as exc:
        if not cfg.retry_halving:
            raise
        logger.warning("step at t=%g failed (%s); retrying with two half steps", state.t, exc)
        mid = stepper(state, 0.5 * dt, q0, ql, cfg, mesh)
        end = stepper(mid, dt - 0.5 * dt, q0, ql, cfg, mesh)
        return [mid, end]


def run_transient(initial: TransientState, grid: TimeGrid, q0, ql, cfg: SolverConfig, mesh: Mesh,
                  keep_substeps: bool = False) -> list[TransientState]:
    """March over every interval of ``grid``; returns the state at each grid time."""
    states = [initial]
    current = initial
    for j, dt in enumerate(grid.steps):
        try:
            produced = _step(current, float(dt), q0, ql, cfg, mesh)
        except StepFailure as exc:
            raise StepFailure(f"run aborted at time index {j + 1}: {exc}", last=states,
                              iterations=exc.iterations) from exc
        current = replace(produced[-1], t=float(grid.times[j + 1]))
        if keep_substeps:
            states.extend(produced[:-1])
        states.append(current)
    return states


__all__ = [
    "STABILIZERS",
    "InnerRecord",
    "SolverConfig",
    "StepFailure",
    "TimeGrid",
    "TransientState",
    "build_time_grid",
    "crack_speed",
    "decompose",
    "default_dt0",
    "initial_derivative",
    "initial_state",
    "run_transient",
    "step_solver1",
    "step_solver2",
    "tip_profile",
    "trapezoidal_rate",
]
