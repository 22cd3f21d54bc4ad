"""Manufactured solutions ``w = u0 * psi(t) * h(x)`` of the normalized PKN problem.

The profile ``h(x) = (1-x)**(1/3) * (1 + s(x))`` is stored as a finite sum of
powers of ``y = 1 - x`` with rational exponents, so ``h``, its derivatives and
the nonlinear flux term ``(h**3 h')'`` are exact term-by-term. This matters at
the tip where the two leading ``y**(-2/3)`` contributions of the operator
cancel identically.

Two time families are provided:

* ``exponential``: ``psi = exp(gamma t)``, similarity parameter ``beta = 2/3``;
* ``power``: ``psi = (a + t)**gamma``, ``beta = 2 gamma / (3 gamma + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import ConfigurationError, Mesh, safeguarded_newton, tail_integrals

THIRD = Fraction(1, 3)


class PowerSeries:
    """Finite sum ``sum_k c_k y**e_k`` with rational exponents."""

    def __init__(self, terms=None):
        self.terms: dict[Fraction, float] = {}
        for e, c in (terms or {}).items():
            self._add(Fraction(e), c)

    def _add(self, e, c):
        c = self.terms.get(e, 0) + c
        if c == 0:
            self.terms.pop(e, None)
        else:
            self.terms[e] = c

    def __add__(self, other):
        if not isinstance(other, PowerSeries):
            other = PowerSeries({0: other})
        out = PowerSeries(self.terms)
        for e, c in other.terms.items():
            out._add(e, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return PowerSeries({e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, PowerSeries):
            return PowerSeries({e: c * other for e, c in self.terms.items()})
        out = PowerSeries()
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                out._add(e1 + e2, c1 * c2)
        return out

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = PowerSeries({0: Fraction(1)})
        for _ in range(n):
            out = out * self
        return out

    def dy(self):
        return PowerSeries({e - 1: c * e for e, c in self.terms.items() if e != 0})

    def min_exponent(self):
        return min(self.terms) if self.terms else None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for e, c in self.terms.items():
            if e == 0:
                out = out + float(c)
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                val = float(c) * y ** float(e)
            if e < 0:
                val = np.where(y == 0.0, np.sign(float(c)) * np.inf, val)
            out = out + val
        return out

    def __repr__(self):
        body = " + ".join(f"{float(c):.6g}*y^({e})" for e, c in sorted(self.terms.items()))
        return f"PowerSeries({body or '0'})"


@dataclass(frozen=True)
class Shape:
    """Spatial profile ``h = y**(1/3) (1 + s)`` with ``y = 1 - x``."""

    name: str
    s: PowerSeries
    h: PowerSeries = field(init=False, repr=False)

    def __post_init__(self):
        h = PowerSeries({THIRD: Fraction(1)}) * (self.s + Fraction(1))
        object.__setattr__(self, "h", h)

    def values(self, x):
        """h, dh/dx, d2h/dx2 at x (derivatives are infinite at the tip)."""
        y = 1.0 - np.asarray(x, dtype=float)
        hy = self.h.dy()
        return self.h(y), -hy(y), hy.dy()(y)

    def s_values(self, x):
        y = 1.0 - np.asarray(x, dtype=float)
        sy = self.s.dy()
        return self.s(y), -sy(y), sy.dy()(y)

    @property
    def flux_term(self) -> PowerSeries:
        """``h**3 dh/dx`` as a series in y; the normalized flux is ``-w**3 w_x / L``."""
        return -(self.h**3 * self.h.dy())

    @property
    def operator(self) -> PowerSeries:
        """``x h' + 3 (h**3 h')'`` (derivatives in x) as a series in y."""
        hy = self.h.dy()
        one_minus_y = PowerSeries({0: Fraction(1), 1: Fraction(-1)})
        return -(one_minus_y * hy) + Fraction(3, 4) * (self.h**4).dy().dy()


def shape_s1(beta: float) -> Shape:
    """Smooth profile with finite leak-off.

    ``s(x) = -(1/(8e)) (1/3 - beta)(1 - x) + 0.05 (1 - x)**2`` where ``beta``
    is the similarity parameter of the family the profile is used with
    (``2 gamma / (3 gamma + 1)`` for the power family).
    """
    a1 = -(1.0 / (8.0 * math.e)) * (1.0 / 3.0 - beta)
    return Shape("s1", PowerSeries({1: a1, 2: 0.05}))


CARTER_COEFF = 0.2
CARTER_GAMMA_V = 0.411


def shape_carter(u0: float = 1.0, coeff: float = CARTER_COEFF) -> Shape:
    """Profile of ``w ~ (1 - x)**(1/3) (u0 + coeff (1 - x)**(1/6))``.

    As a relative shape, ``s = (coeff / u0) (1 - x)**(1/6)``. The induced
    leak-off is singular like ``(1 - x)**(-1/2)`` at the tip (Carter-type).
    """
    if not u0 > 0.0:
        raise ConfigurationError("u0 must be positive")
    return Shape("carter", PowerSeries({Fraction(1, 6): coeff / u0}))


def shape_custom(coeffs_in_x, name="custom") -> Shape:
    """Polynomial ``s(x) = sum_k coeffs[k] x**k`` (must vanish at x = 1)."""
    p = np.polynomial.Polynomial(coeffs_in_x)
    if abs(p(1.0)) > 1e-12:
        raise ConfigurationError("custom s(x) must vanish at the tip x = 1")
    # re-expand in y = 1 - x
    q = p(np.polynomial.Polynomial([1.0, -1.0]))
    terms = {k: c for k, c in enumerate(q.coef) if k > 0 and c != 0.0}
    return Shape(name, PowerSeries(terms))


SHAPES = ("s1", "carter")


@dataclass(frozen=True)
class BenchmarkSpec:
    family: str = "power"
    gamma: float = 0.2
    a: float = 1.0
    u0: float = 1.0
    shape: str = "s1"
    custom_s: tuple | None = None

    def __post_init__(self):
        if self.family not in ("power", "exponential"):
            raise ConfigurationError(f"unknown time family {self.family!r}")
        if self.family == "exponential" and not self.gamma > 0.0:
            raise ConfigurationError("exponential family needs gamma > 0")
        if self.family == "power":
            if not self.gamma > -1.0 / 3.0:
                raise ConfigurationError("power family needs gamma > -1/3")
            if self.a < 0.0:
                raise ConfigurationError("power family needs a >= 0")
            if self.a == 0.0:
                raise ConfigurationError("a = 0 gives a zero initial crack; use a > 0")
        if self.shape not in SHAPES + ("custom",):
            raise ConfigurationError(f"unknown shape {self.shape!r}")
        if self.shape == "custom" and self.custom_s is None:
            raise ConfigurationError("custom shape needs custom_s coefficients")
        if not self.u0 > 0.0:
            raise ConfigurationError("u0 must be positive")

    @property
    def beta(self) -> float:
        if self.family == "exponential":
            return 2.0 / 3.0
        return 2.0 * self.gamma / (3.0 * self.gamma + 1.0)

    @property
    def gamma_over_beta(self) -> float:
        if self.family == "exponential":
            return 1.5 * self.gamma
        return 0.5 * (3.0 * self.gamma + 1.0)

    def profile(self) -> Shape:
        if self.shape == "s1":
            return shape_s1(self.beta)
        if self.shape == "carter":
            return shape_carter(self.u0)
        return shape_custom(self.custom_s)

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return np.exp(self.gamma * t)
        return (self.a + t) ** self.gamma

    def dpsi(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return self.gamma * np.exp(self.gamma * t)
        return self.gamma * (self.a + t) ** (self.gamma - 1.0)

    def length(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return np.sqrt(2.0 * self.u0**3 / (9.0 * self.gamma)) * np.exp(1.5 * self.gamma * t)
        c = 2.0 * self.u0**3 / (3.0 * (3.0 * self.gamma + 1.0))
        return np.sqrt(c * (self.a + t) ** (3.0 * self.gamma + 1.0))

    def length_rate(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return 1.5 * self.gamma * self.length(t)
        return 0.5 * (3.0 * self.gamma + 1.0) * self.length(t) / (self.a + t)

    def leakoff_time_factor(self, t):
        """Time factor multiplying the spatial leak-off shape."""
        t = np.asarray(t, dtype=float)
        if self.family == "exponential":
            return np.exp(self.gamma * t)
        return (self.a + t) ** (self.gamma - 1.0)

    @property
    def leak_exponent(self) -> float:
        """Leading power of ``1 - x`` in the leak-off at the tip."""
        shp = self.profile()
        series = self.gamma_over_beta * shp.operator - self.gamma * shp.h
        big = max(abs(c) for c in series.terms.values())
        exps = [e for e, c in series.terms.items() if abs(c) > 1e-12 * big]
        return float(min(exps)) if exps else 1.0 / 3.0

    def with_u0(self, u0: float) -> "BenchmarkSpec":
        return BenchmarkSpec(self.family, self.gamma, self.a, u0, self.shape, self.custom_s)


@dataclass
class BenchmarkFields:
    t: float
    w: np.ndarray
    w_t: np.ndarray
    q_l: np.ndarray
    w0: float
    L: float
    V0: float
    q0: float
    beta: float
    alpha_exp: float


def _tip_safe(series: PowerSeries, y, tip_value=0.0):
    vals = series(y)
    if series.min_exponent() is not None and series.min_exponent() < 0:
        vals = np.where(y == 0.0, tip_value, vals)
    return vals


def leakoff_shape(spec: BenchmarkSpec, x) -> np.ndarray:
    """Spatial leak-off ``Q(x)`` with ``q_l(t, x) = Q(x) * leakoff_time_factor(t)``.

    A singular tip value (Carter shape) is stored as 0 at ``x = 1``; the
    quadrature weight of that node vanishes for graded meshes.
    """
    shp = spec.profile()
    y = 1.0 - np.asarray(x, dtype=float)
    series = spec.u0 * (spec.gamma_over_beta * shp.operator - spec.gamma * shp.h)
    return _tip_safe(series, y)


def leakoff(spec: BenchmarkSpec, t, x) -> np.ndarray:
    return leakoff_shape(spec, x) * spec.leakoff_time_factor(t)


def influx(spec: BenchmarkSpec, t) -> float:
    h0, dh0, _ = spec.profile().values(0.0)
    psi = spec.psi(t)
    return float(-(spec.u0**4) * psi**4 * h0**3 * dh0 / spec.length(t))


def eval_benchmark(spec: BenchmarkSpec, t: float, mesh: Mesh | np.ndarray) -> BenchmarkFields:
    if t < 0.0:
        raise ConfigurationError("benchmark time must be nonnegative")
    x = mesh.x if isinstance(mesh, Mesh) else np.asarray(mesh, dtype=float)
    shp = spec.profile()
    y = 1.0 - x
    h = shp.h(y)
    psi = float(spec.psi(t))
    w0 = spec.u0 * psi
    L = float(spec.length(t))
    alpha = 1.0 if spec.family == "exponential" else (
        (spec.gamma - 1.0) / spec.gamma if spec.gamma != 0.0 else math.nan)
    return BenchmarkFields(
        t=float(t),
        w=spec.u0 * psi * h,
        w_t=spec.u0 * float(spec.dpsi(t)) * h,
        q_l=leakoff(spec, t, x),
        w0=w0,
        L=L,
        V0=w0**3 / (3.0 * L),
        q0=influx(spec, t),
        beta=spec.beta,
        alpha_exp=alpha,
    )


def flux_function(spec: BenchmarkSpec):
    return lambda t: influx(spec, t)


def leakoff_function(spec: BenchmarkSpec, mesh: Mesh):
    Q = leakoff_shape(spec, mesh.x)
    return lambda t: Q * float(spec.leakoff_time_factor(t))


def fluid_velocity(spec: BenchmarkSpec, t, x) -> np.ndarray:
    """Particle velocity ``V = q / w = -(1/L) w**2 w_x`` (finite at the tip)."""
    shp = spec.profile()
    y = 1.0 - np.asarray(x, dtype=float)
    # h**2 h' = (1/3) d(h**3)/dx = -(1/3) d(h**3)/dy
    h2dh = -(shp.h**3).dy() * THIRD
    psi = float(spec.psi(t))
    return -(spec.u0 * psi) ** 3 / float(spec.length(t)) * h2dh(y)


def gamma_v(spec: BenchmarkSpec, t: float, mesh: Mesh) -> float:
    """Spread of the particle velocity along the crack relative to its mean."""
    w = eval_benchmark(spec, t, mesh).w
    if np.any(w[:-1] <= 0.0):
        raise ConfigurationError("opening must be positive inside the crack")
    V = fluid_velocity(spec, t, mesh.x)
    mean = tail_integrals(mesh, V)[0][0]
    return float((V.max() - V.min()) / mean)


def mean_velocity(spec: BenchmarkSpec, t: float, mesh: Mesh) -> float:
    return float(tail_integrals(mesh, fluid_velocity(spec, t, mesh.x))[0][0])


def matched_u0(spec: BenchmarkSpec, reference: BenchmarkSpec, mesh: Mesh, t: float = 0.0) -> float:
    """Amplitude giving ``spec`` the same mean particle velocity as ``reference``."""
    target = mean_velocity(reference, t, mesh)

    def f(u0):
        return mean_velocity(spec.with_u0(u0), t, mesh) - target

    def fp(u0, d=1e-7):
        return (f(u0 * (1 + d)) - f(u0 * (1 - d))) / (2 * d * u0)

    lo, hi = 1e-3, 1.0
    while f(hi) < 0.0:
        hi *= 2.0
    return safeguarded_newton(f, fp, lo, hi, x0=spec.u0)


def carter_amplitude(mesh: Mesh | None = None, target: float = CARTER_GAMMA_V, t: float = 0.0,
                     template: BenchmarkSpec | None = None) -> float:
    """Amplitude u0 of the Carter benchmark with ``gamma_v = target``.

    ``gamma_v`` decreases monotonically in u0 for this shape because the
    singular correction has a fixed absolute size.
    """
    mesh = build_reference_mesh() if mesh is None else mesh
    base = BenchmarkSpec(shape="carter") if template is None else template

    def f(u0):
        return gamma_v(base.with_u0(u0), t, mesh) - target

    def fp(u0, d=1e-7):
        return (f(u0 * (1 + d)) - f(u0 * (1 - d))) / (2 * d * u0)

    lo, hi = 0.25, 1.0
    while f(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
    while f(lo) < 0.0:
        lo *= 0.5
    return safeguarded_newton(f, fp, lo, hi, x0=1.3, rtol=1e-12)


def build_reference_mesh() -> Mesh:
    return Mesh(400, 3.0)


def governing_residual(spec: BenchmarkSpec, t: float, mesh: Mesh) -> np.ndarray:
    """Pointwise relative residual of ``3L^2 (w_t + q_l) = x w0^3 w_x + 3 (w^3 w_x)_x``.

    The right-hand side is assembled from nodal ``h, h', h''`` (not from the
    series used to build ``q_l``) and normalized by the largest term at each
    node. The tip node is excluded (every term is singular or zero there).
    """
    f = eval_benchmark(spec, t, mesh)
    x = mesh.x[:-1]
    h, dh, d2h = spec.profile().values(x)
    amp = spec.u0 * float(spec.psi(t))
    w, wx, wxx = amp * h, amp * dh, amp * d2h
    lhs = 3.0 * f.L**2 * (f.w_t[:-1] + f.q_l[:-1])
    adv = x * f.w0**3 * wx
    diff = 3.0 * (3.0 * w**2 * wx**2 + w**3 * wxx)
    scale = np.maximum.reduce([np.abs(3.0 * f.L**2 * f.w_t[:-1]), np.abs(3.0 * f.L**2 * f.q_l[:-1]),
                               np.abs(adv), np.abs(9.0 * w**2 * wx**2), np.abs(3.0 * w**3 * wxx)])
    return np.abs(lhs - adv - diff) / scale


def speed_residual(spec: BenchmarkSpec, t: float) -> float:
    L = float(spec.length(t))
    w0 = spec.u0 * float(spec.psi(t))
    return abs(float(spec.length_rate(t)) - w0**3 / (3.0 * L)) / abs(float(spec.length_rate(t)))


def _selfsimilar_data(shape: Shape, beta: float, u0: float, mesh: Mesh):
    y = 1.0 - mesh.x
    beta_ql = _tip_safe(u0 * (shape.operator - beta * shape.h), y)
    h0, dh0, _ = shape.values(0.0)
    q0_star = float(-3.0 * u0**2.5 * h0**3 * dh0)
    return beta_ql, q0_star


def selfsimilar_problem_from_benchmark(spec: BenchmarkSpec, mesh: Mesh):
    """Self-similar BVP whose exact solution is ``u = u0 h(x)`` for this spec."""
    from .selfsimilar import SelfSimilarProblem

    beta_ql, q0_star = _selfsimilar_data(spec.profile(), spec.beta, spec.u0, mesh)
    return SelfSimilarProblem(beta=spec.beta, q0_star=q0_star, ql_star=None, mesh=mesh, beta_ql_star=beta_ql)


def selfsimilar_benchmark(beta: float, mesh: Mesh, u0: float = 1.0, shape: str = "s1"):
    """Manufactured self-similar problem parametrized directly by ``beta``.

    Returns ``(problem, exact_u)``. For shape ``s1`` the profile depends on
    ``beta`` through its linear coefficient, so any real ``beta`` is allowed
    (the time families only reach ``beta < 2/3``).
    """
    from .selfsimilar import SelfSimilarProblem

    shp = shape_s1(beta) if shape == "s1" else shape_carter(u0)
    beta_ql, q0_star = _selfsimilar_data(shp, beta, u0, mesh)
    problem = SelfSimilarProblem(beta=beta, q0_star=q0_star, ql_star=None, mesh=mesh, beta_ql_star=beta_ql)
    return problem, u0 * shp.h(1.0 - mesh.x)
