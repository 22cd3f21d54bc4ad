"""Graded mesh, tail quadrature, normalization and small numeric helpers.

Every solver in the package works on the normalized crack ``x in [0, 1]``
(tip at ``x = 1``) discretized by the graded mesh

    x_j = 1 - (1 - j/N)**rho,   j = 0, ..., N.

Integrals of the form ``int_x^1 f`` and ``int_x^1 (xi - x) f`` are evaluated
in the uniform coordinate ``s = j/N`` where the crack-tip power law
``(1 - x)**(1/3)`` becomes polynomial for ``rho = 3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


class ConfigurationError(ValueError):
    """Raised for inputs outside the validated range of an operation."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative procedure does not reach its tolerance.

    The last iterate (whatever the caller found useful) is kept in
    ``last`` so a failure can be inspected rather than silently dropped.
    """

    def __init__(self, message, last=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


TIP_EXPONENT = 1.0 / 3.0


@dataclass(frozen=True)
class Mesh:
    """Graded nodal mesh on [0, 1] refined toward the crack tip."""

    N: int
    rho: float = 3.0
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"mesh needs N >= 2 intervals, got {self.N}")
        if not self.rho >= 1.0:
            raise ConfigurationError(f"mesh grading rho must be >= 1, got {self.rho}")
        s = np.arange(self.N + 1) / self.N
        x = 1.0 - (1.0 - s) ** self.rho
        x[0], x[-1] = 0.0, 1.0
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def x(self) -> np.ndarray:
        return self.nodes

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    @property
    def jacobian(self) -> np.ndarray:
        """dx/ds at the nodes."""
        return self.rho * (1.0 - self.s) ** (self.rho - 1.0)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def __len__(self):
        return self.N + 1


def build_mesh(N: int, rho: float = 3.0) -> Mesh:
    return Mesh(N, rho)


@dataclass(frozen=True)
class TipAsymptotics:
    """Near-tip exponents: opening ~ (1-x)**alpha, leak-off ~ (1-x)**eta.

    ``zeta`` is the exponent of the first correction to the leading term.
    """

    eta: float
    alpha: float = TIP_EXPONENT

    def __post_init__(self):
        if self.eta < -0.5:
            raise ConfigurationError(f"leak-off tip exponent must be >= -1/2, got {self.eta}")

    @property
    def zeta(self) -> float:
        return min(4.0 / 3.0, 1.0 + self.eta)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
SINGULAR_DEGREE = 3  # local interpolation degree of the smooth factor


def _group_weights(s, nodes, a, b, weight):
    """int_a^b l_m(s) weight(s) ds for the Lagrange basis on ``s[nodes]``."""
    t = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
    gw = 0.5 * (b - a) * _GL_WEIGHTS * weight(t)
    sn = s[list(nodes)]
    out = np.empty(len(nodes))
    for m in range(len(nodes)):
        others = np.delete(sn, m)
        lm = np.prod((t[:, None] - others) / (sn[m] - others), axis=1)
        out[m] = gw @ lm
    return out


def _tail_groups(n):
    """Interpolation groups (nodes, a, b) in units of panels for each tail [j, n].

    Composite Simpson from the tip; when the number of panels left is odd,
    the first three panels take the 3/8 rule; a single trailing panel is
    covered by the cubic through the last four nodes (four-point
    Adams-Moulton weights), or the quadratic through three when n = 2.
    """
    rows = []
    for j in range(n):
        left = n - j
        groups = []
        k = j
        if left == 1:
            lo = max(n - 3, 0)
            groups.append((tuple(range(lo, n + 1)), n - 1, n))
        else:
            if left % 2 == 1:
                groups.append((tuple(range(j, j + 4)), j, j + 3))
                k = j + 3
            for m in range(k, n, 2):
                groups.append(((m, m + 1, m + 2), m, m + 2))
        rows.append(groups)
    return rows


def _cubic_stencil(a, n):
    lo = min(a, n - 3)
    return tuple(range(lo, lo + 4))


@lru_cache(maxsize=32)
def quadrature_matrices(mesh: "Mesh") -> tuple[np.ndarray, np.ndarray]:
    """Dense matrices ``(A0, A1)`` with ``I0 = A0 @ f`` and ``I1 = A1 @ f``.

    ``I0`` applies the composite rules to the transformed integrand
    ``g = f * dx/ds``. ``I1`` integrates a piecewise cubic interpolant of g
    against the exact weight ``x(s) - x_j`` instead of differencing two
    O(1) integrals, so the small moments near the tip keep their relative
    accuracy.
    """
    n, rho = mesh.N, mesh.rho
    s = mesh.s
    x = mesh.x
    cache = {}
    A0 = np.zeros((n + 1, n + 1))
    A1 = np.zeros((n + 1, n + 1))
    for j, groups in enumerate(_tail_groups(n)):
        for nodes, a, b in groups:
            key = (nodes, a, b)
            if key not in cache:
                cnodes = nodes if len(nodes) == 4 or n < 3 else _cubic_stencil(a, n)
                cache[key] = (_group_weights(s, nodes, s[a], s[b], np.ones_like), None,
                              (cnodes, _group_weights(s, cnodes, s[a], s[b], np.ones_like),
                               _group_weights(s, cnodes, s[a], s[b], lambda t: (1.0 - t) ** rho)))
            w0, w1, cubic = cache[key]
            idx = list(nodes)
            A0[j, idx] += w0
            # x(s) - x_j = (1 - x_j) - (1 - s)^rho, both parts on the cubic interpolant
            A1[j, list(cubic[0])] += (1.0 - x[j]) * cubic[1] - cubic[2]
    A0 *= mesh.jacobian[None, :]
    A1 *= mesh.jacobian[None, :]
    A0.setflags(write=False)
    A1.setflags(write=False)
    return A0, A1


def _lagrange_at(nodes_s, t):
    """Lagrange basis on ``nodes_s`` evaluated at the points ``t`` (rows)."""
    t = np.atleast_1d(t)
    out = np.empty((t.size, nodes_s.size))
    for m in range(nodes_s.size):
        others = np.delete(nodes_s, m)
        out[:, m] = np.prod((t[:, None] - others) / (nodes_s[m] - others), axis=1)
    return out


@lru_cache(maxsize=64)
def singular_quadrature_matrices(mesh: "Mesh", alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Tail-moment matrices for integrands ``f = (1 - x)**alpha * phi``.

    ``phi`` is interpolated by piecewise cubics in s and integrated against the
    exact weight ``(1 - x)**alpha dx/ds`` (Gauss-Jacobi on the panel touching
    the tip, Gauss-Legendre elsewhere). The tip value of ``phi`` is
    extrapolated from the interior nodes, so ``f`` at the tip is never used
    and may be singular. Requires ``alpha > -1``.
    """
    if not alpha > -1.0:
        raise ConfigurationError(f"tip exponent must exceed -1, got {alpha}")
    n, rho = mesh.N, mesh.rho
    s, x, h = mesh.s, mesh.x, mesh.h
    p = rho * (alpha + 1.0) - 1.0  # weight rho (1-s)**p on the s axis
    deg = min(SINGULAR_DEGREE, n - 1)
    glx, glw = np.polynomial.legendre.leggauss(10)
    jac0 = roots_jacobi(10, p, 0.0)
    jac1 = roots_jacobi(10, p + rho, 0.0)
    # phi at the tip as a combination of interior values
    ext_nodes = np.arange(max(n - deg - 1, 0), n)
    ext = _lagrange_at(s[ext_nodes], 1.0)[0]
    W0 = np.zeros((n, n + 1))
    W1 = np.zeros((n, n + 1))
    for k in range(n):
        lo = min(max(k - 1, 0), n - deg)
        stencil = np.arange(lo, lo + deg + 1)
        a, b = s[k], s[k + 1]
        if k == n - 1:
            # 1 - s = (1 - t) h/2 on the reference panel
            t0, c0 = jac0
            t1, c1 = jac1
            pts0 = a + 0.5 * (t0 + 1.0) * h
            pts1 = a + 0.5 * (t1 + 1.0) * h
            wt0 = rho * c0 * (0.5 * h) ** (p + 1.0)
            wt1 = rho * c1 * (0.5 * h) ** (p + rho + 1.0)
        else:
            pts0 = pts1 = 0.5 * (b - a) * glx + 0.5 * (a + b)
            wt0 = 0.5 * (b - a) * glw * rho * (1.0 - pts0) ** p
            wt1 = wt0 * (1.0 - pts0) ** rho
        W0[k, stencil] += wt0 @ _lagrange_at(s[stencil], pts0)
        W1[k, stencil] += wt1 @ _lagrange_at(s[stencil], pts1)
    # fold the extrapolated tip value of phi into the interior columns
    for W in (W0, W1):
        W[:, ext_nodes] += np.outer(W[:, n], ext)
        W[:, n] = 0.0
    S0 = np.cumsum(W0[::-1], axis=0)[::-1]
    S1 = np.cumsum(W1[::-1], axis=0)[::-1]
    A0 = np.zeros((n + 1, n + 1))
    A1 = np.zeros((n + 1, n + 1))
    A0[:n] = S0
    A1[:n] = (1.0 - x[:n, None]) * S0 - S1
    # phi = f / (1 - x)**alpha at interior nodes
    scale = np.zeros(n + 1)
    scale[:n] = (1.0 - x[:n]) ** -alpha
    A0 *= scale[None, :]
    A1 *= scale[None, :]
    A0.setflags(write=False)
    A1.setflags(write=False)
    return A0, A1


def tail_integrals(mesh: Mesh, f, alpha: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(I0, I1)`` with ``I0_j = int_{x_j}^1 f`` and
    ``I1_j = int_{x_j}^1 (xi - x_j) f dxi`` for nodal values ``f``.

    Both are computed in the uniform coordinate s with the Jacobian of the
    mesh map folded into the integrand. ``I0[-1] = I1[-1] = 0``.

    With ``alpha`` given, ``f`` is treated as ``(1 - x)**alpha`` times a
    smooth factor (see ``singular_quadrature_matrices``); the tip value of
    ``f`` is then ignored.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.N + 1,):
        raise ConfigurationError(f"expected {mesh.N + 1} nodal values, got shape {f.shape}")
    if alpha is None:
        A0, A1 = quadrature_matrices(mesh)
    else:
        A0, A1 = singular_quadrature_matrices(mesh, float(alpha))
        f = np.where(np.arange(f.size) == f.size - 1, 0.0, f)
    return A0 @ f, A1 @ f


def integrate(mesh: Mesh, f) -> float:
    """int_0^1 f dx by the same quadrature."""
    return float(tail_integrals(mesh, f)[0][0])


def l2_relative_diff(u_new, u_old) -> float:
    """||u_new - u_old||_2 / ||u_new||_2."""
    u_new = np.asarray(u_new, dtype=float)
    u_old = np.asarray(u_old, dtype=float)
    if u_new.shape != u_old.shape:
        raise ConfigurationError("arrays differ in shape")
    denom = np.linalg.norm(u_new)
    if denom == 0.0:
        raise ZeroDivisionError("relative difference undefined for a zero iterate")
    return float(np.linalg.norm(u_new - u_old) / denom)


def safeguarded_newton(f, fprime, lo, hi, x0=None, rtol=1e-13, maxiter=200):
    """Root of ``f`` in the bracket ``[lo, hi]`` (sign change required).

    Newton steps are taken while they stay inside the bracket and shrink the
    step; otherwise bisect. The bracket is tightened after every evaluation.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ConfigurationError(f"no sign change on [{lo}, {hi}]")
    if flo > 0.0:
        lo, hi = hi, lo
    x = 0.5 * (lo + hi) if x0 is None or not min(lo, hi) < x0 < max(lo, hi) else x0
    dx_old = abs(hi - lo)
    dx = dx_old
    fx = f(x)
    for it in range(maxiter):
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        d = fprime(x)
        newton_ok = d != 0.0 and abs(2.0 * fx) < abs(dx_old * d)
        if newton_ok:
            x_new = x - fx / d
            newton_ok = min(lo, hi) < x_new < max(lo, hi)
        dx_old = dx
        if newton_ok:
            dx = x_new - x
        else:
            x_new = 0.5 * (lo + hi)
            dx = x_new - x
        x = x_new
        if abs(dx) <= rtol * abs(x):
            return x
        fx = f(x)
    raise ConvergenceError(f"root not found in {maxiter} iterations", last=x, iterations=maxiter)


@dataclass(frozen=True)
class NormalizationMap:
    """Physical scales of the PKN model.

    ``M = 12 mu`` (Poiseuille constant), ``k = 2E / (pi h (1 - nu**2))``
    (pressure/opening ratio), ``l_star`` the initial half-length.
    """

    M: float
    k: float
    l_star: float

    def __post_init__(self):
        for name in ("M", "k", "l_star"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name} must be positive")

    @classmethod
    def from_physical(cls, viscosity, youngs_modulus, poisson_ratio, height, l_star):
        if not 0.0 <= poisson_ratio < 1.0:
            raise ConfigurationError("Poisson ratio must lie in [0, 1)")
        if not height > 0.0:
            raise ConfigurationError("height must be positive")
        k = 2.0 * youngs_modulus / (np.pi * height * (1.0 - poisson_ratio**2))
        return cls(M=12.0 * viscosity, k=k, l_star=l_star)

    @property
    def t_n(self) -> float:
        return self.M / (self.k * self.l_star)

    # normalized <- physical
    def time(self, t):
        return np.asarray(t) / self.t_n

    def opening(self, w):
        return np.asarray(w) / self.l_star

    def length(self, l):
        return np.asarray(l) / self.l_star

    def coordinate(self, x, l):
        return np.asarray(x) / np.asarray(l)

    def influx(self, q0):
        return self.t_n * np.asarray(q0) / self.l_star**2

    def leakoff(self, ql):
        return self.t_n * np.asarray(ql) / self.l_star

    def tip_coefficient(self, w0, L):
        return np.asarray(w0) * np.asarray(L) ** (1.0 / 3.0) / self.l_star ** (2.0 / 3.0)

    def normalize(self, q0=None, ql=None, w=None, l=None, t=None):
        """Map whichever physical fields are given to normalized ones."""
        out = {}
        if q0 is not None:
            out["q0"] = self.influx(q0)
        if ql is not None:
            out["ql"] = self.leakoff(ql)
        if w is not None:
            out["w"] = self.opening(w)
        if l is not None:
            out["L"] = self.length(l)
        if t is not None:
            out["t"] = self.time(t)
        return out

    def denormalize(self, q0=None, ql=None, w=None, L=None, t=None):
        out = {}
        if q0 is not None:
            out["q0"] = np.asarray(q0) * self.l_star**2 / self.t_n
        if ql is not None:
            out["ql"] = np.asarray(ql) * self.l_star / self.t_n
        if w is not None:
            out["w"] = np.asarray(w) * self.l_star
        if L is not None:
            out["l"] = np.asarray(L) * self.l_star
        if t is not None:
            out["t"] = np.asarray(t) * self.t_n
        return out


def normalize(scales: NormalizationMap, q0_phys=None, ql_phys=None, w_phys=None, l_phys=None, t_phys=None):
    return scales.normalize(q0=q0_phys, ql=ql_phys, w=w_phys, l=l_phys, t=t_phys)


def denormalize(scales: NormalizationMap, q0=None, ql=None, w=None, L=None, t=None):
    return scales.denormalize(q0=q0, ql=ql, w=w, L=L, t=t)
