"""Population quantities under a known truth: moment curves, the information
matrices, the sandwich covariance of the regression estimate and the
finite-rank Fredholm solve behind the CLT for weighted hazard integrals.

All integrals over [0, tau] use composite Simpson on a uniform grid with an
odd number of nodes. Kinks of the integrands (breakpoints of lambda0 and of
G_C) should fall on even-indexed nodes for full fourth-order accuracy; the
default 2001-node grid on [0, 1] handles the default truth.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, UsageError

DEFAULT_NODES = 2001
DEFAULT_REPS = 100_000
_CHUNK = 20_000


def uniform_grid(tau, n_nodes=DEFAULT_NODES):
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise UsageError("Simpson grid needs an odd number of nodes >= 3")
    return np.linspace(0.0, float(tau), n_nodes)


def simpson_weights(grid):
    n = grid.size
    if n < 3 or n % 2 == 0:
        raise UsageError("Simpson grid needs an odd number of nodes >= 3")
    h = (grid[-1] - grid[0]) / (n - 1)
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0.0):
        raise UsageError("Simpson grid must be uniform")
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def cumulative_trapezoid(values, grid):
    """Running integral from grid[0]; works on trailing-axis-free arrays
    of shape ``(n, ...)``."""
    dx = np.diff(grid).reshape((-1,) + (1,) * (values.ndim - 1))
    steps = 0.5 * (values[1:] + values[:-1]) * dx
    return np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(steps, axis=0)])


def _interp_rows(t, grid, table):
    """Linear interpolation of a ``(n, ...)`` table at points ``t``."""
    idx = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, grid.size - 2)
    frac = (t - grid[idx]) / (grid[idx + 1] - grid[idx])
    frac = frac.reshape((-1,) + (1,) * (table.ndim - 1))
    return table[idx] * (1.0 - frac) + table[idx + 1] * frac


def moments_at(truth, t):
    """``(a, b, p)`` at times ``t``: X-moments of ``exp(beta0'X) G_T(t|X)``."""
    nodes, wts = truth.covariate.quadrature()
    t = np.asarray(t, dtype=float).reshape(-1)
    ex = np.exp(nodes @ truth.beta0)
    out_b = np.empty(t.size)
    out_a = np.empty((t.size, truth.dim))
    out_p = np.empty((t.size, truth.dim, truth.dim))
    outer = np.einsum("qi,qj->qij", nodes, nodes)
    for lo in range(0, t.size, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        g = truth.conditional_survival(t[sl], nodes) * (wts * ex)
        out_b[sl] = g.sum(axis=1)
        out_a[sl] = g @ nodes
        out_p[sl] = np.einsum("tq,qij->tij", g, outer)
    return out_a, out_b, out_p


def moment_grids(truth, grid):
    """``(a, b, p, T, K)`` on ``grid`` with ``T = p b - a a'`` and ``K = lambda0 / b``."""
    grid = np.asarray(grid, dtype=float)
    if grid.min() < 0.0 or grid.max() > truth.tau:
        raise UsageError("grid must lie in [0, tau]")
    a, b, p = moments_at(truth, grid)
    bad = np.flatnonzero(~(b > 1e-300))
    if bad.size:
        raise NumericError(f"b(t) underflows at t={grid[bad[0]]!r}")
    T = p * b[:, None, None] - np.einsum("ti,tj->tij", a, a)
    T = 0.5 * (T + np.swapaxes(T, 1, 2))
    K = truth.hazard0(grid) / b
    return a, b, p, T, K


def _sym(mat):
    return 0.5 * (mat + mat.T)


def _check_finite(name, mat):
    if not np.all(np.isfinite(mat)):
        raise NumericError(f"{name} has non-finite entries")
    return mat


def matrix_A(truth, grid=None, weights=None, p=None):
    """``E[X X' exp(beta0'X) Lambda0(Y)] = int lambda0 p G_C``."""
    grid = uniform_grid(truth.tau) if grid is None else np.asarray(grid, dtype=float)
    weights = simpson_weights(grid) if weights is None else weights
    if p is None:
        _, _, p = moments_at(truth, grid)
    integrand = p * (truth.hazard0(grid) * truth.censor.survival(grid))[:, None, None]
    return _check_finite("A", _sym(np.tensordot(weights, integrand, axes=1)))


def matrix_A_mc(truth, reps, seed):
    """Monte Carlo version of :func:`matrix_A` with its standard errors."""
    d = truth.draw(np.random.default_rng(seed), reps)
    x = d["x"]
    s = np.exp(x @ truth.beta0) * truth.hazard0.cumulative(d["y"])
    vals = np.einsum("ri,rj,r->rij", x, x, s)
    return _sym(vals.mean(axis=0)), vals.std(axis=0, ddof=1) / np.sqrt(reps)


def matrix_M(T, K, G_C, weights):
    """``int T K G_C`` by the quadrature ``weights``."""
    integrand = T * (K * G_C)[:, None, None]
    return _check_finite("M", _sym(np.tensordot(weights, integrand, axes=1)))


def sandwich(M, sigma):
    """``M^{-1} sigma M^{-1}``, symmetrized."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    scale = max(np.abs(M).max(), 1e-300)
    if np.linalg.cond(M) > 1e12 or np.abs(M).max() == 0.0 or scale < 1e-300:
        raise NumericError("M is singular: the normality result assumes a nonsingular M, "
                           "which this truth violates")
    left = np.linalg.solve(M, sigma)
    return _sym(np.linalg.solve(M, left.T).T)


@dataclass(frozen=True, eq=False)
class AsymptoticTables:
    grid: np.ndarray
    weights: np.ndarray
    lam0: np.ndarray
    G_C: np.ndarray
    a: np.ndarray
    b: np.ndarray
    p: np.ndarray
    T: np.ndarray
    K: np.ndarray
    A: np.ndarray
    M: np.ndarray
    S: np.ndarray
    Sigma_beta: np.ndarray = field(default=None)
    sigma_beta_se: np.ndarray = field(default=None)
    sandwich: np.ndarray = field(default=None)

    def to_dict(self):
        out = {"grid_nodes": int(self.grid.size), "A": self.A.tolist(),
               "M": self.M.tolist(), "S": self.S.tolist()}
        for name in ("Sigma_beta", "sigma_beta_se", "sandwich"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val.tolist()
        return out


def build_tables(truth, n_nodes=DEFAULT_NODES, reps=DEFAULT_REPS, seed=0, with_sigma=True):
    """All population quantities on a uniform Simpson grid.

    ``Sigma_beta`` is the Monte Carlo covariance of ``zeta`` from ``reps``
    fresh draws; pass ``with_sigma=False`` to skip it.
    """
    grid = uniform_grid(truth.tau, n_nodes)
    weights = simpson_weights(grid)
    a, b, p, T, K = moment_grids(truth, grid)
    lam0 = truth.hazard0(grid)
    gc = truth.censor.survival(grid)
    A = matrix_A(truth, grid, weights, p)
    M = matrix_M(T, K, gc, weights)
    S = _sym(np.tensordot(weights, np.einsum("ti,tj->tij", a, a) * (K * gc)[:, None, None], axes=1))
    tables = AsymptoticTables(grid, weights, lam0, gc, a, b, p, T, K, A, M, S)
    if not with_sigma:
        return tables
    sig, se = sigma_beta(truth, tables, reps, seed)
    object.__setattr__(tables, "Sigma_beta", sig)
    object.__setattr__(tables, "sigma_beta_se", se)
    object.__setattr__(tables, "sandwich", sandwich(M, sig))
    return tables


def _score_pieces(truth, d):
    """Per-draw quantities shared by both influence functions."""
    beta = truth.beta0
    e = truth.error_model
    mgf = e.mgf(beta)
    ew = np.exp(d["w"] @ beta)
    corr = ew / mgf
    dcorr = ew[:, None] * (mgf * d["w"] - e.mgf_moment(beta)) / mgf ** 2
    return corr, dcorr, truth.hazard0.cumulative(d["y"])


def zeta_samples(truth, tables, reps, seed):
    """Draws of ``zeta = q'[(-K a'g, g)]`` as rows, one per fresh replicate.

    With ``g`` ranging over the unit vectors this is the score for beta after
    projecting out the hazard direction, so ``sqrt(n)(beta_hat - beta0)`` is
    asymptotically ``M^{-1}`` times a normal with covariance ``Cov(zeta)``.
    """
    if reps < 2:
        raise UsageError("need at least two Monte Carlo replicates")
    rng = np.random.default_rng(seed)
    cum_ka = cumulative_trapezoid(tables.K[:, None] * tables.a, tables.grid)
    out = np.empty((reps, truth.dim))
    for lo in range(0, reps, _CHUNK):
        k = min(_CHUNK, reps - lo)
        d = truth.draw(rng, k)
        a_y, b_y, _ = moments_at(truth, d["y"])
        corr, dcorr, lam_y = _score_pieces(truth, d)
        delta = d["delta"][:, None]
        out[lo:lo + k] = (delta * (d["w"] - a_y / b_y[:, None])
                          + corr[:, None] * _interp_rows(d["y"], tables.grid, cum_ka)
                          - dcorr * lam_y[:, None])
    return out


def sigma_beta(truth, tables, reps=DEFAULT_REPS, seed=0):
    """Monte Carlo ``Cov(zeta)`` and the standard errors of its entries."""
    z = zeta_samples(truth, tables, reps, seed)
    cov = _sym(np.atleast_2d(np.cov(z, rowvar=False)))
    c = z - z.mean(axis=0)
    prods = np.einsum("ri,rj->rij", c, c)
    se = prods.std(axis=0, ddof=1) / np.sqrt(reps)
    return _check_finite("Sigma_beta", cov), se


@dataclass(frozen=True, eq=False)
class FredholmSolution:
    grid: np.ndarray
    f: np.ndarray
    phi_lambda: np.ndarray
    phi_beta: np.ndarray
    sigma_sq: float = None
    sigma_sq_se: float = None
    residual: float = None

    def to_dict(self):
        return {"grid": self.grid.tolist(), "f": self.f.tolist(),
                "phi_lambda": self.phi_lambda.tolist(), "phi_beta": self.phi_beta.tolist(),
                "sigma_sq": self.sigma_sq, "sigma_sq_se": self.sigma_sq_se,
                "residual": self.residual}


def named_weight(name, grid):
    """Weight functions selectable by name: ``one`` and ``t``."""
    if name == "one":
        return np.ones_like(grid)
    if name == "t":
        return np.array(grid, dtype=float)
    raise UsageError(f"unknown weight function {name!r}; use 'one', 't' or grid values")


def fredholm_residual(phi_lambda, f, tables):
    """Sup-norm of ``phi/K - a' A^{-1} m(phi) - f`` on the grid."""
    m_phi = np.tensordot(tables.weights, phi_lambda[:, None] * tables.a * tables.G_C[:, None], axes=1)
    rank = tables.a @ np.linalg.solve(tables.A, m_phi)
    return float(np.max(np.abs(phi_lambda / tables.K - rank - f)))


def solve_fredholm(f, tables, truth=None, reps=DEFAULT_REPS, seed=0):
    """Solve ``phi/K - a' A^{-1} m(phi) = f`` on the grid.

    The operator has rank m, so ``phi = K (f + a'c)`` where ``c`` solves
    ``(A - S) c = int K f a G_C``; ``phi_beta = -c``. When ``truth`` is
    given, ``sigma_sq = Var <q', phi>`` is estimated from ``reps`` draws.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != tables.grid.size:
        raise UsageError("weight function must be given on the table grid")
    if not np.all(np.isfinite(f)):
        raise UsageError("weight function must be finite")
    kg = tables.K * tables.G_C
    v = np.tensordot(tables.weights, (kg * f)[:, None] * tables.a, axes=1)
    lhs = tables.A - tables.S
    if np.linalg.cond(lhs) > 1e12:
        raise NumericError("A - S is singular: the integral equation has no unique solution here")
    c = np.linalg.solve(lhs, v)
    phi = tables.K * (f + tables.a @ c)
    resid = fredholm_residual(phi, f, tables)
    sig = se = None
    if truth is not None:
        vals = functional_score_samples(truth, tables, f, phi, -c, reps, seed)
        sig = float(np.var(vals, ddof=1))
        c2 = (vals - vals.mean()) ** 2
        se = float(c2.std(ddof=1) / np.sqrt(reps))
    return FredholmSolution(tables.grid, f, phi, -c, sig, se, resid)


def functional_score_samples(truth, tables, f, phi_lambda, phi_beta, reps, seed):
    """Draws of ``<q'(Y, Delta, W; lambda0, beta0), (phi_lambda, phi_beta)>``."""
    if reps < 2:
        raise UsageError("need at least two Monte Carlo replicates")
    rng = np.random.default_rng(seed)
    # phi/lambda0 = (f + a'c)/b is smooth even where lambda0 is small
    ratio = (f + tables.a @ -phi_beta) / tables.b
    cum_phi = cumulative_trapezoid(phi_lambda, tables.grid)
    out = np.empty(reps)
    for lo in range(0, reps, _CHUNK):
        k = min(_CHUNK, reps - lo)
        d = truth.draw(rng, k)
        corr, dcorr, lam_y = _score_pieces(truth, d)
        y = d["y"]
        out[lo:lo + k] = (d["delta"] * (np.interp(y, tables.grid, ratio) + d["w"] @ phi_beta)
                          - corr * np.interp(y, tables.grid, cum_phi)
                          - (dcorr @ phi_beta) * lam_y)
    return out


def weighted_hazard_integral(hazard, f, grid, censor):
    """``int_0^tau hazard(u) f(u) G_C(u) du`` with ``f`` linear between grid
    nodes, the hazard piecewise linear and G_C from the censor law.

    Each piece between merged breakpoints is a cubic, so Simpson is exact.
    """
    bt, _ = hazard.breakpoints
    pts = np.unique(np.concatenate([bt, grid, np.asarray(censor.kinks(), dtype=float)]))
    pts = pts[(pts >= grid[0]) & (pts <= grid[-1])]
    mid = 0.5 * (pts[1:] + pts[:-1])

    def integrand(u):
        return hazard(u) * np.interp(u, grid, f) * censor.survival(u)

    lo, hi = integrand(pts[:-1]), integrand(pts[1:])
    return float(np.sum(np.diff(pts) * (lo + 4.0 * integrand(mid) + hi) / 6.0))
