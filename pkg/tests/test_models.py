import math

import numpy as np
import pytest
from scipy import stats

from mfmcmc.models import (
    GPRegressionModel,
    HeatPDEProblem,
    LGCPModel,
    LotkaVolterraModel,
    ToyConjugateModel,
    analytic_solution,
    generate_gp_data,
    generate_lv_data,
    generate_toy_data,
    gp_loglik,
    heat_objective,
    heat_solve,
    lgcp_loglik,
    lv_loglik,
    synth_generate,
    toy_loglik,
    toy_posterior_closed_form,
)
from mfmcmc.models.gp import NU0, NU1, TRUE_LENGTHSCALE, gp_covariance, lognormal_logpdf
from mfmcmc.models.heat import CFL, TRUE_PARAMS, grid, relative_l2_error, spacing
from mfmcmc.models.lgcp import GridMismatch, quadrature_nodes
from mfmcmc.models.lotka_volterra import (
    PRIOR_MEAN,
    SYNTH_PARAMS,
    SYNTH_Z0,
    lv_solve,
    step_size,
)
from mfmcmc.models.toy import sigma2
from mfmcmc.numerics import ODEBlowUp

# --- toy ------------------------------------------------------------------


def test_toy_variances():
    assert sigma2(1) == 3.0
    assert sigma2(2) == 1.5
    assert sigma2(10) == pytest.approx(1.02, rel=1e-15)
    assert sigma2(math.inf) == 1.0
    assert all(sigma2(k) > 1.0 for k in range(1, 1000))


def test_toy_closed_form():
    assert toy_posterior_closed_form(np.array([])) == (0.0, 1.0)
    data, _ = generate_toy_data(np.random.default_rng(0), 200)
    mean, var = toy_posterior_closed_form(data)
    assert var == pytest.approx(1 / 201, rel=1e-15)
    assert mean == pytest.approx(data.sum() / 201, rel=1e-15)


def test_toy_loglik_matches_scipy():
    data = np.array([0.3, -1.2, 2.0])
    for k in (1, 3, math.inf):
        expected = stats.norm(0.4, math.sqrt(sigma2(k))).logpdf(data).sum()
        assert toy_loglik(0.4, k, data) == pytest.approx(expected, rel=1e-13)


def test_toy_model_levels_include_prior():
    data = np.array([0.5, 0.7])
    m = ToyConjugateModel(data)
    th = np.array([0.2])
    expected = stats.norm.logpdf(0.2) + toy_loglik(0.2, 4, data)
    assert m.log_pi(th, 4) == pytest.approx(expected, rel=1e-13)
    assert m.log_pi_limit(th) == pytest.approx(stats.norm.logpdf(0.2) + toy_loglik(0.2, math.inf, data))


@pytest.fixture(scope="module")
def toy200():
    data, _ = generate_toy_data(np.random.default_rng(0), 200)
    return ToyConjugateModel(data)


def _gap(m, th, k):
    return abs(m.log_pi(np.array([th]), k) - m.log_pi_limit(np.array([th])))


@pytest.mark.parametrize("theta", [-2.0, -1.0, 0.0, 2.0, 3.0])
def test_toy_gap_monotone(toy200, theta):
    gaps = [_gap(toy200, theta, k) for k in range(1, 51)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("theta", np.linspace(-3, 3, 25))
def test_toy_gap_eventually_monotone(toy200, theta):
    # the gap can rise at first when the mean squared residual lies in (1, 3);
    # once sigma_k^2 falls below it the decrease is strict
    msr = toy200._sq(theta) / toy200._n
    k0 = 1 if msr <= 1 else max(1, math.ceil(math.sqrt(2 / (msr - 1))))
    gaps = [_gap(toy200, theta, k) for k in range(k0, 51)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert _gap(toy200, theta, 10_000) < 1e-3


# --- LGCP -----------------------------------------------------------------


def test_lgcp_zero_field():
    n = quadrature_nodes(3)
    assert lgcp_loglik(np.zeros(5), np.zeros(n), 3, (0.0, 10.0)) == 0.0


@pytest.mark.parametrize("c0", [-1.0, 0.3, 2.0])
def test_lgcp_constant_field(c0):
    k, N = 4, 7
    got = lgcp_loglik(np.full(N, c0), np.full(quadrature_nodes(k), c0), k, (1851.0, 1963.0))
    assert got == pytest.approx(112.0 * (1 - math.exp(c0)) + N * c0, rel=1e-12)


def test_lgcp_node_count_and_mismatch():
    assert quadrature_nodes(1) == 12
    assert [quadrature_nodes(k, 10) for k in (1, 2, 50)] == [12, 14, 110]
    with pytest.raises(GridMismatch):
        lgcp_loglik(np.zeros(2), np.zeros(13), 1, (0.0, 1.0))
    m = LGCPModel(np.array([1.0, 2.0]), (0.0, 5.0))
    assert m.nodes(3).size == 16
    with pytest.raises(GridMismatch):
        m.log_pi(np.zeros(3), 1)


def test_lgcp_events_must_lie_in_domain():
    with pytest.raises(ValueError):
        LGCPModel(np.array([0.5, 11.0]), (0.0, 10.0))


@pytest.fixture(scope="module")
def lgcp_small():
    rng = np.random.default_rng(3)
    events = np.sort(rng.uniform(0.0, 40.0, 25))
    return LGCPModel(events, (0.0, 40.0), lengthscale=8.0)


def test_lgcp_levels_frozen_until_refresh(lgcp_small):
    f = lgcp_small.sample_prior(np.random.default_rng(1))
    lgcp_small.refresh(np.random.default_rng(2))
    a = [lgcp_small.log_pi(f, k) for k in (1, 2, 7)]
    b = [lgcp_small.log_pi(f, k) for k in (7, 2, 1)][::-1]
    assert a == b
    lgcp_small.refresh(np.random.default_rng(3))
    assert [lgcp_small.log_pi(f, k) for k in (1, 2, 7)] != a


def test_lgcp_quadrature_draws_have_conditional_law(lgcp_small):
    # across refreshes the quadrature values follow N(A f, C)
    f = lgcp_small.sample_prior(np.random.default_rng(4))
    k = 2
    A, L = lgcp_small._operator(k)
    rng = np.random.default_rng(5)
    draws = []
    for _ in range(4000):
        lgcp_small.refresh(rng)
        draws.append(lgcp_small.quadrature_values(f, k))
    draws = np.array(draws)
    mean = A @ f
    sd = np.sqrt(np.diag(L @ L.T))
    assert np.all(np.abs(draws.mean(axis=0) - mean) <= 4 * sd / math.sqrt(4000) + 1e-12)


def test_lgcp_prior_factor_and_intensity(lgcp_small):
    S = lgcp_small.prior_chol @ lgcp_small.prior_chol.T
    from mfmcmc.numerics import se_kernel_matrix

    np.testing.assert_allclose(S, se_kernel_matrix(lgcp_small.events, lgcp_small.events, 8.0), atol=1e-6)
    f = lgcp_small.sample_prior(np.random.default_rng(6))
    # kriging at an event reproduces its latent value up to the jitter on S_oo
    x = lgcp_small.events[3]
    assert lgcp_small.intensity(f, [x])[0] == pytest.approx(math.exp(f[3]), rel=1e-3)


def test_lgcp_cost(lgcp_small):
    assert lgcp_small.cost(1) == 12.0 and lgcp_small.level_cost(5) == 20.0


# --- Lotka-Volterra -------------------------------------------------------


def test_lv_constants():
    assert step_size(1) == pytest.approx(1 / 60)
    assert step_size(3) == pytest.approx(1 / 80)
    assert SYNTH_PARAMS == (1.5, 1.0, 3.0, 1.0)
    assert SYNTH_Z0 == (1.0, 1.0)
    np.testing.assert_array_equal(PRIOR_MEAN, [0.0, -2.0, 0.0, -3.0])


def test_lv_decoupled_closed_form():
    a, g = 0.8, 1.1
    t = np.linspace(0.2, 3.0, 15)
    z = lv_solve((a, 0.0, g, 0.0), (2.0, 3.0), t, 0.01, "rk4")
    np.testing.assert_allclose(z[:, 0], 2.0 * np.exp(a * t), rtol=1e-6)
    np.testing.assert_allclose(z[:, 1], 3.0 * np.exp(-g * t), rtol=1e-6)


def test_lv_decoupled_likelihood_limit():
    a, g = 0.8, 1.1
    t = np.linspace(0.2, 3.0, 15)
    y = np.column_stack([1.5 * np.exp(a * t), 0.7 * np.exp(-g * t)]) * 1.1
    exact = np.column_stack([a * t, -g * t])  # log of the analytic solution with z0 = (1, 1)
    expected = float(np.sum(stats.norm(exact, 0.25).logpdf(np.log(y)) - np.log(y)))
    got = lv_loglik((a, 0.0, g, 0.0), 200, t, y, z0=(1.0, 1.0))
    assert got == pytest.approx(expected, rel=1e-9)


def test_lv_solver_matches_generic_integrator():
    from mfmcmc.numerics import ode_solve

    p = SYNTH_PARAMS

    def rhs(t, z):
        u, v = z
        return np.array([p[0] * u - p[1] * u * v, -p[2] * v + p[3] * u * v])

    t = np.linspace(0.013, 3.0, 40)
    for method in ("euler", "rk4"):
        np.testing.assert_allclose(lv_solve(p, (1.0, 1.0), t, 1 / 70, method),
                                   ode_solve(rhs, np.array([1.0, 1.0]), t, 1 / 70, method), rtol=1e-12)


@pytest.fixture(scope="module")
def lv_data():
    t = np.linspace(0.015, 3.0, 200)
    return t, generate_lv_data(np.random.default_rng(0), t)


def test_lv_euler_rk4_gap_shrinks(lv_data):
    t, y = lv_data
    theta = np.log(SYNTH_PARAMS)
    gaps = []
    for k in (1, 5, 20):
        e = lv_loglik(np.exp(theta), k, t, y, method="euler")
        r = lv_loglik(np.exp(theta), k, t, y, method="rk4")
        gaps.append(abs(e - r) / abs(r))
    assert gaps[0] > gaps[1] > gaps[2]


def test_lv_blow_up_is_minus_inf(lv_data):
    t, y = lv_data
    # a strongly positive feedback overflows within the window
    assert lv_loglik((60.0, 0.0, 1.0, 40.0), 1, t, y, method="euler") == -math.inf
    with pytest.raises(ODEBlowUp):
        lv_solve((60.0, 0.0, 1.0, 40.0), (1.0, 1.0), t, 1 / 60, "euler")


def test_lv_model_uses_centred_parameters(lv_data):
    t, y = lv_data
    m = LotkaVolterraModel(t, y)
    theta_bar = np.log(SYNTH_PARAMS) - PRIOR_MEAN
    np.testing.assert_allclose(m.params(theta_bar), SYNTH_PARAMS, rtol=1e-14)
    assert m.log_pi(theta_bar, 3) == lv_loglik(SYNTH_PARAMS, 3, t, y)
    assert m.cost(1) == 180.0
    assert m.prior_chol[0, 0] == pytest.approx(math.sqrt(0.1))
    with pytest.raises(ValueError):
        LotkaVolterraModel(t, -y)


def test_lv_synthetic_data_deterministic():
    t = np.linspace(0.1, 2.0, 10)
    a = generate_lv_data(np.random.default_rng(5), t)
    b = generate_lv_data(np.random.default_rng(5), t)
    assert np.array_equal(a, b) and a.shape == (10, 2) and np.all(a > 0)


# --- heat equation ---------------------------------------------------------


def test_heat_grid_and_spacing():
    assert spacing(1) == pytest.approx(1 / 9)
    assert grid(0.5).size == 21
    with pytest.raises(ValueError):
        grid(0.3)


def test_heat_boundary_exactly_zero():
    u = heat_solve(0.85, 0.21, 0.1)
    assert u[0] == 0.0 and u[-1] == 0.0


def test_heat_matches_semi_discrete_oracle():
    # the sine mode is an exact eigenvector of the central-difference Laplacian,
    # so the method-of-lines solution is a scalar exponential in time
    a, b = TRUE_PARAMS
    for dx in (0.1, 0.05):
        x = grid(dx)
        lam = 2.0 * (1.0 - math.cos(math.pi * dx / 2.0)) / dx**2
        expected = math.exp(2 * b - a * lam) * np.sin(np.pi * x / 2)
        np.testing.assert_allclose(heat_solve(a, b, dx), expected, atol=1e-11)


def test_heat_error_second_order_in_space():
    a, b = TRUE_PARAMS
    errs = [relative_l2_error(heat_solve(a, b, dx), grid(dx), 1.0, a, b) for dx in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)


def test_heat_analytic_solution_satisfies_boundary():
    assert analytic_solution([0.0, 10.0], 1.0, 0.85, 0.21) == pytest.approx([0.0, 0.0], abs=1e-14)


def test_heat_energy_zero_at_self_target():
    dx = spacing(2)
    target = (grid(dx), heat_solve(*TRUE_PARAMS, dx))
    prob = HeatPDEProblem(target=target)
    assert prob.energy(TRUE_PARAMS, 2) == 0.0
    assert prob.energy((-0.1, 0.2), 2) == math.inf


def test_heat_grid_search_minimum_at_truth():
    k = 1
    dx = spacing(k)
    prob = HeatPDEProblem(target=(grid(dx), heat_solve(*TRUE_PARAMS, dx)))
    alphas = TRUE_PARAMS[0] + 0.01 * np.arange(-10, 11)
    betas = TRUE_PARAMS[1] + 0.01 * np.arange(-10, 11)
    E = np.array([[prob.energy((a, b), k) for b in betas] for a in alphas])
    i, j = np.unravel_index(np.argmin(E), E.shape)
    assert (i, j) == (10, 10)


def test_heat_identifiable_combination():
    # the field depends on (alpha, beta) only through 2 beta - alpha * pi^2 / 4 up to
    # discretization, so points on that line have nearly equal energy
    prob = HeatPDEProblem(target=(grid(spacing(1)), heat_solve(*TRUE_PARAMS, spacing(1))))
    on_line = prob.energy((1.25, 0.21 + 0.4 * math.pi**2 / 8), 1)
    off_line = prob.energy((1.25, 0.21), 1)
    assert on_line < 1e-4 * off_line


def test_heat_cost_counts_nodes_times_steps():
    prob = HeatPDEProblem(target=(grid(0.5), np.zeros(21)))
    dx = spacing(1)
    assert prob.cost(1) == (grid(dx).size - 2) * math.ceil(1.0 / (CFL * dx * dx) - 1e-9)


def test_heat_objective_interpolates_fine_target():
    fine = 0.05
    target_x, target_u = grid(fine), heat_solve(*TRUE_PARAMS, fine)
    coarse = heat_objective(*TRUE_PARAMS, 0.1, target_x, target_u)
    assert 0.0 < coarse < 1e-5


# --- GP -------------------------------------------------------------------


@pytest.fixture(scope="module")
def gp_data():
    return generate_gp_data(np.random.default_rng(1), 100)


def _dense_loglik(ell, X, y, noise=1.0):
    A = gp_covariance(X, ell, noise)
    return float(stats.multivariate_normal(np.zeros(y.size), A).logpdf(y))


@pytest.mark.parametrize("ell", [20.0, 45.0, 90.0])
def test_gp_full_cg_matches_dense(gp_data, ell):
    X, y = gp_data
    for k in (100, 130):
        assert gp_loglik([ell], k, X, y) == pytest.approx(_dense_loglik(ell, X, y), rel=1e-8)


def test_gp_single_point():
    X, y = np.array([3.0]), np.array([1.7])
    assert gp_loglik([5.0], 1, X, y, noise_var=0.5) == pytest.approx(stats.norm(0, math.sqrt(1.5)).logpdf(1.7),
                                                                    rel=1e-14)


def test_gp_prior():
    ref = stats.lognorm(s=math.sqrt(NU1), scale=math.exp(NU0))
    for th in (20.0, 45.0, 60.0):
        assert lognormal_logpdf(th) == pytest.approx(ref.logpdf(th), rel=1e-12)
    assert lognormal_logpdf(-1.0) == -math.inf
    assert (NU0, NU1, TRUE_LENGTHSCALE) == (3.8, 0.03, 45.0)


@pytest.mark.parametrize("ell", [2.0, 5.0, 10.0])
def test_gp_levels_cauchy(ell):
    # well-conditioned design: the quadratic form is monotone in k and its
    # increments die out
    rng = np.random.default_rng(2)
    X = np.sort(rng.uniform(0, 100, 60))
    y = rng.standard_normal(60)
    L = [gp_loglik([ell], k, X, y) for k in range(1, 61)]
    inc = np.abs(np.diff(L))
    assert all(a >= b - 1e-9 for a, b in zip(L, L[1:]))
    assert inc[-10:].max() < 1e-6 * inc[0]
    assert np.all(inc[20:] <= inc[0])


def test_gp_model_incremental_and_prior(gp_data):
    X, y = gp_data
    m = GPRegressionModel(X, y)
    assert m.log_pi([45.0], 5) == pytest.approx(lognormal_logpdf(45.0) + gp_loglik([45.0], 5, X, y), rel=1e-13)
    assert m.log_pi([-3.0], 1) == -math.inf
    assert m.cost(7) == 7.0 and m.level_cost(7) == 1.0


def test_gp_data_shape_and_determinism():
    X1, y1 = generate_gp_data(np.random.default_rng(9), 100)
    X2, y2 = generate_gp_data(np.random.default_rng(9), 100)
    assert X1.shape == (100,) and np.array_equal(X1, X2) and np.array_equal(y1, y2)
    assert np.all(np.diff(X1) >= 0)


def test_synth_generate():
    d = synth_generate("toy", None, np.random.default_rng(0))
    assert d["data"].size == 200
    assert synth_generate("gp", None, np.random.default_rng(0))["X"].size == 100
    lv = synth_generate("lv", {"t_obs": np.linspace(0.1, 1.0, 5)}, np.random.default_rng(0))
    assert lv["y"].shape == (5, 2)
    a = synth_generate("toy", {"n": 30}, np.random.default_rng(4))["data"]
    b = synth_generate("toy", {"n": 30}, np.random.default_rng(4))["data"]
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        synth_generate("pde", None, np.random.default_rng(0))
