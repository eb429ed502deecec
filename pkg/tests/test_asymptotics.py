import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from corrcox import CensorLaw, CovariateLaw, ErrorModel, Truth, default_truth
from corrcox import asymptotics as asy
from corrcox.core.hazard import constant_hazard
from corrcox.errors import NumericError, UsageError

# independent oracle: scipy.integrate.quad on the closed-form integrands of
# the default truth (three-point X law), tolerances 1e-14
ORACLE_A = 0.2512514461263754
ORACLE_M = 0.20878733532974791
ORACLE_S = 0.042464110796627486


def make_truth(atoms, probs, beta0=0.0, tau=1.0, censor=None, error=None):
    return Truth(constant_hazard(1.0, tau, 1.0), [beta0],
                 CovariateLaw("finite", atoms=atoms, probs=probs),
                 censor or CensorLaw(atom_weight=1.0), error or ErrorModel.none(), 1.0)


@pytest.fixture(scope="module")
def tables():
    return asy.build_tables(default_truth(), reps=50_000, seed=4)


def test_degenerate_x_moments():
    tr = make_truth([0.0], [1.0])
    grid = asy.uniform_grid(1.0, 101)
    a, b, p, T, K = asy.moment_grids(tr, grid)
    assert np.all(a == 0) and np.all(T == 0)
    assert np.allclose(b, np.exp(-grid), rtol=1e-14)
    assert np.allclose(K, np.exp(grid), rtol=1e-14)
    assert np.all(asy.matrix_A(tr, grid) == 0)


def test_rademacher_symmetry():
    tr = make_truth([-1.0, 1.0], [0.5, 0.5])
    a, *_ = asy.moment_grids(tr, asy.uniform_grid(1.0, 101))
    assert np.max(np.abs(a)) < 1e-16


@pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
def test_matrix_a_closed_form(tau):
    tr = make_truth([-1.0, 1.0], [0.5, 0.5], tau=tau)
    A = asy.matrix_A(tr, asy.uniform_grid(tau))
    assert A[0, 0] == pytest.approx(1 - np.exp(-tau), rel=1e-12)
    mc, se = asy.matrix_A_mc(tr, 200_000, 0)
    assert abs(mc[0, 0] - A[0, 0]) < 4 * se[0, 0]


def test_default_truth_against_quad_oracle(tables):
    assert tables.A[0, 0] == pytest.approx(ORACLE_A, rel=1e-10)
    assert tables.M[0, 0] == pytest.approx(ORACLE_M, rel=1e-10)
    assert tables.S[0, 0] == pytest.approx(ORACLE_S, rel=1e-10)
    assert np.allclose(tables.A - tables.S, tables.M, rtol=1e-12)


def test_matrix_a_quadrature_vs_mc():
    tr = default_truth()
    mc, _ = asy.matrix_A_mc(tr, 1_000_000, 5)
    assert asy.matrix_A(tr)[0, 0] == pytest.approx(mc[0, 0], rel=0.01)


def test_gaussian_covariate_moments_vs_mc():
    tr = Truth(constant_hazard(0.8, 1.0, 1.0), [0.5], CovariateLaw("gaussian", cov=[[0.6]]),
               CensorLaw(0.2, 1.0, 0.2), ErrorModel.none(), 1.0)
    grid = np.array([0.1, 0.5, 1.0])
    a, b, p, _, _ = asy.moment_grids(tr, grid)
    x = np.random.default_rng(6).normal(0, np.sqrt(0.6), 1_000_000)
    g = np.exp(0.5 * x)[:, None] * np.exp(-np.exp(0.5 * x)[:, None] * 0.8 * grid)
    for got, draws in ((b, g), (a[:, 0], x[:, None] * g), (p[:, 0, 0], x[:, None] ** 2 * g)):
        se = draws.std(axis=0) / np.sqrt(x.size)
        assert np.all(np.abs(got - draws.mean(axis=0)) < 4 * se)
    # and to many digits against adaptive quadrature over the normal density
    for i, t in enumerate(grid):
        for k, got in ((0, b[i]), (1, a[i, 0]), (2, p[i, 0, 0])):
            ref = quad(lambda z: z ** k * np.exp(0.5 * z - np.exp(0.5 * z) * 0.8 * t)
                       * stats.norm.pdf(z, scale=np.sqrt(0.6)), -12, 12, epsabs=1e-14)[0]
            assert got == pytest.approx(ref, rel=1e-9, abs=1e-14)


def test_t_is_psd_and_m_refines(tables):
    assert np.all(tables.T[:, 0, 0] >= -1e-15)
    tr = default_truth()
    coarse = asy.build_tables(tr, 1001, with_sigma=False).M
    fine = asy.build_tables(tr, 2001, with_sigma=False).M
    assert np.max(np.abs(coarse - fine)) < 1e-6 * np.abs(fine).max()


def test_matrix_m_constant_integrand():
    grid = asy.uniform_grid(2.0, 11)
    T = np.full((11, 1, 1), 3.0)
    assert asy.matrix_M(T, np.ones(11), np.ones(11), asy.simpson_weights(grid))[0, 0] == pytest.approx(6.0)


def test_sandwich_algebra(rng):
    q = rng.normal(size=(3, 3))
    M = q @ q.T + 3 * np.eye(3)
    assert np.allclose(asy.sandwich(M, M), np.linalg.inv(M), atol=1e-12)
    assert np.all(asy.sandwich(M, np.zeros((3, 3))) == 0)
    s = rng.normal(size=(3, 3))
    sig = s @ s.T
    direct = np.linalg.inv(M) @ sig @ np.linalg.inv(M)
    assert np.allclose(asy.sandwich(M, sig), direct, atol=1e-12)
    with pytest.raises(NumericError, match="singular"):
        asy.sandwich(np.zeros((2, 2)), np.eye(2))


def test_sigma_beta_degenerate_fixture_is_zero():
    tr = make_truth([0.0], [1.0])
    tab = asy.build_tables(tr, 201, with_sigma=False)
    sig, _ = asy.sigma_beta(tr, tab, 10_000, 0)
    assert np.all(sig == 0)
    # M vanishes too, so the sandwich does not exist here
    with pytest.raises(NumericError, match="nonsingular"):
        asy.sandwich(tab.M, sig)


def test_sigma_beta_reproducible_across_seeds(tables):
    tr = default_truth()
    other, se = asy.sigma_beta(tr, tables, 50_000, seed=99)
    assert abs(other[0, 0] - tables.Sigma_beta[0, 0]) < 3 * np.hypot(se[0, 0], tables.sigma_beta_se[0, 0])
    _, se_big = asy.sigma_beta(tr, tables, 200_000, seed=7)
    assert se_big[0, 0] / se[0, 0] == pytest.approx(0.5, rel=0.15)


def test_sigma_beta_without_error_is_the_information():
    tr = default_truth(error_sigma=0.0)
    tab = asy.build_tables(tr, reps=200_000, seed=8)
    assert abs(tab.Sigma_beta[0, 0] - tab.M[0, 0]) < 3 * tab.sigma_beta_se[0, 0]
    assert tab.sandwich[0, 0] == pytest.approx(1 / tab.M[0, 0], rel=0.02)


def test_measurement_error_inflates_variance(tables):
    assert tables.Sigma_beta[0, 0] > tables.M[0, 0]


def test_fredholm_zero_weight(tables):
    sol = asy.solve_fredholm(np.zeros_like(tables.grid), tables, default_truth(), 2000, 0)
    assert np.all(sol.phi_lambda == 0) and np.all(sol.phi_beta == 0)
    assert sol.sigma_sq == 0.0


def test_fredholm_decoupled_when_a_vanishes():
    tr = make_truth([-1.0, 1.0], [0.5, 0.5])
    tab = asy.build_tables(tr, 201, with_sigma=False)
    f = np.cos(tab.grid)
    sol = asy.solve_fredholm(f, tab)
    assert np.allclose(sol.phi_lambda, tab.K * f, rtol=1e-14, atol=1e-16)


@pytest.mark.parametrize("name", ["one", "t"])
def test_fredholm_residual_and_uniqueness(tables, name, rng):
    f = asy.named_weight(name, tables.grid)
    sol = asy.solve_fredholm(f, tables)
    assert sol.residual < 1e-8
    assert np.allclose(sol.phi_beta, -np.linalg.solve(
        tables.A, np.tensordot(tables.weights, sol.phi_lambda[:, None] * tables.a * tables.G_C[:, None], axes=1)))
    bump = rng.normal(size=tables.grid.size) * 1e-3
    assert asy.fredholm_residual(sol.phi_lambda + bump, f, tables) > sol.residual


def test_sigma_phi_is_grid_stable():
    tr = default_truth()
    vals = []
    for nodes in (2001, 4001):
        tab = asy.build_tables(tr, nodes, with_sigma=False)
        vals.append(asy.solve_fredholm(asy.named_weight("t", tab.grid), tab, tr, 50_000, 3).sigma_sq)
    assert abs(vals[1] - vals[0]) < 1e-3 * vals[1]


def test_grid_validation():
    with pytest.raises(UsageError):
        asy.uniform_grid(1.0, 100)
    with pytest.raises(UsageError):
        asy.simpson_weights(np.array([0.0, 0.1, 0.5]))


def test_weighted_integral_is_exact():
    tr = default_truth()
    grid = asy.uniform_grid(1.0, 11)
    f = grid.copy()
    # int_0^1 (0.5 + 0.4u) u G_C(u) du by hand, G_C piecewise linear
    ref = quad(lambda u: (0.5 + 0.4 * u) * u * tr.censor.survival(u), 0, 1, points=[0.2],
               epsabs=1e-14)[0]
    assert asy.weighted_hazard_integral(tr.hazard0, f, grid, tr.censor) == pytest.approx(ref, rel=1e-13)
