import numpy as np
import pytest

from pknspectral.benchmarks import BenchmarkSpec, eval_benchmark, flux_function, leakoff_function
from pknspectral.core import ConfigurationError, build_mesh
from pknspectral.harness import benchmark_initial_state
from pknspectral.transient import (
    SolverConfig,
    StepFailure,
    TimeGrid,
    build_time_grid,
    crack_speed,
    initial_derivative,
    run_transient,
    step_solver1,
    step_solver2,
    trapezoidal_rate,
)

SPEC = BenchmarkSpec(gamma=0.2)


@pytest.fixture(scope="module")
def setup():
    mesh = build_mesh(40, 3.0)
    return mesh, benchmark_initial_state(SPEC, mesh), flux_function(SPEC), leakoff_function(SPEC, mesh)


class TestTimeGrid:
    def test_endpoints_first_step_and_monotone(self):
        g = build_time_grid(30, 100.0, 0.2)
        assert g.times[0] == 0.0 and g.times[-1] == 100.0
        assert g.times[1] == pytest.approx(0.2 + (100 - 29 * 0.2) / 29**3)
        assert np.all(np.diff(g.steps) > 0)

    def test_default_first_step(self):
        assert build_time_grid(11, 10.0).dt0 == pytest.approx(0.1)

    @pytest.mark.parametrize("K, tK, dt0", [(1, 1.0, 0.1), (5, -1.0, 0.1), (5, 1.0, 0.3), (5, 1.0, 0.0)])
    def test_invalid(self, K, tK, dt0):
        with pytest.raises(ConfigurationError):
            TimeGrid(K, tK, dt0)


class TestSolverConfig:
    def test_two_term_tip_needs_exponent(self):
        with pytest.raises(ConfigurationError):
            SolverConfig(two_term_tip=True)

    @pytest.mark.parametrize("kw", [dict(variant=3), dict(eps=0.0), dict(max_inner=0), dict(stabilizer="x")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            SolverConfig(**kw)

    def test_alphas(self):
        cfg = SolverConfig(two_term_tip=True, leak_exponent=-0.5)
        assert cfg.du_alpha == pytest.approx(0.5)
        assert cfg.q_alpha == pytest.approx(-0.5)
        assert SolverConfig(leak_exponent=1 / 3).du_alpha is None


def test_crack_speed():
    assert crack_speed(3.0, 3.0) == pytest.approx(3.0)
    with pytest.raises(ConfigurationError):
        crack_speed(1.0, 0.0)


def test_initial_derivative_by_finite_differences_converges(setup):
    # w_t is a small difference of O(1) terms, so the FD fallback is coarse
    # but converges; the benchmark path uses the exact operator
    mesh, s0, _, ql = setup
    f = eval_benchmark(SPEC, 0.0, mesh)
    assert np.abs(s0.w_t[:-1] / f.w_t[:-1] - 1).max() < 1e-10
    errs = []
    for N in (40, 80, 160):
        m = build_mesh(N, 3.0)
        e = eval_benchmark(SPEC, 0.0, m)
        wt = initial_derivative(e.w, e.w0, e.L, leakoff_function(SPEC, m)(0.0), m)
        errs.append(np.abs(wt - e.w_t).max() / np.abs(e.w_t).max())
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) > 0.9)


def test_trapezoidal_rate_is_exact_for_quadratics():
    t0, dt = 0.3, 0.1
    f = lambda t: 1 + 2 * t + 3 * t**2
    fp = lambda t: 2 + 6 * t
    assert trapezoidal_rate(f(t0 + dt), f(t0), fp(t0), dt) == pytest.approx(fp(t0 + dt), rel=1e-12)


@pytest.mark.parametrize("stepper", [step_solver1, step_solver2])
def test_single_step_is_accurate(setup, stepper):
    mesh, s0, q0, ql = setup
    s1 = stepper(s0, 0.1, q0, ql, SolverConfig(variant=1 if stepper is step_solver1 else 2), mesh)
    ex = eval_benchmark(SPEC, 0.1, mesh)
    assert abs(s1.L / ex.L - 1) < 1e-4
    assert np.abs(s1.w[:-1] / ex.w[:-1] - 1).max() < 1e-3
    assert s1.w[-1] == 0.0 and s1.w_t[-1] == 0.0


def test_records_capture_every_inner_iteration(setup):
    mesh, s0, q0, ql = setup
    recs = []
    s1 = step_solver1(s0, 0.2, q0, ql, SolverConfig(variant=1), mesh, records=recs)
    assert len(recs) == s1.inner_iterations
    assert all(r.dt == 0.2 for r in recs)


def test_first_step_metric_relation(setup):
    # L^2 advances with W0^3, so for small dt a first-step W0 error moves L by
    # 2 L^2 dL = W0^3 dW0 dt (relative errors)
    mesh, s0, q0, ql = setup
    dt = 1e-4
    s1 = step_solver2(s0, dt, q0, ql, SolverConfig(eps=1e-14), mesh)
    ex = eval_benchmark(SPEC, dt, mesh)
    dL = s1.L / ex.L - 1
    dW0 = s1.w0 / ex.w0 - 1
    assert 2 * ex.L**2 * dL == pytest.approx(ex.w0**3 * dW0 * dt, rel=0.2)


def test_viscous_stabilizer_agrees_with_newton_at_moderate_beta(setup):
    mesh, s0, q0, ql = setup
    a = step_solver2(s0, 0.2, q0, ql, SolverConfig(stabilizer="viscous"), mesh)
    b = step_solver2(s0, 0.2, q0, ql, SolverConfig(), mesh)
    assert a.L == pytest.approx(b.L, rel=1e-8)
    assert np.allclose(a.w, b.w, rtol=1e-6, atol=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_viscous_stabilizer_fails_at_large_beta(setup):
    mesh, s0, q0, ql = setup
    with pytest.raises(StepFailure):
        step_solver2(s0, 0.01, q0, ql, SolverConfig(stabilizer="viscous", retry_halving=False), mesh)


def test_run_keeps_grid_times_and_is_deterministic(setup):
    mesh, s0, q0, ql = setup
    grid = build_time_grid(6, 5.0, 0.2)
    a = run_transient(s0, grid, q0, ql, SolverConfig(), mesh)
    b = run_transient(s0, grid, q0, ql, SolverConfig(), mesh)
    assert [s.t for s in a] == list(grid.times)
    assert all(np.array_equal(x.w, y.w) and x.L == y.L for x, y in zip(a, b))


def test_failed_run_keeps_partial_trajectory(setup):
    mesh, s0, q0, ql = setup
    grid = build_time_grid(4, 3.0, 0.5)
    with pytest.raises(StepFailure) as exc:
        run_transient(s0, grid, q0, ql, SolverConfig(variant=1, max_inner=2), mesh)
    assert exc.value.last[0] is s0


def test_nonpositive_step(setup):
    mesh, s0, q0, ql = setup
    with pytest.raises(ConfigurationError):
        step_solver2(s0, 0.0, q0, ql, SolverConfig(), mesh)
