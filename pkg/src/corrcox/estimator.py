"""Two-stage corrected estimation of (baseline hazard, beta).

For fixed beta the best hazard in the Lipschitz cone is a tent spline with
nodes at the distinct observation times, so the hazard part reduces to a
finite concave problem in the node values (``kernels.barrier_maximize``).
beta is then chosen by a multistart bounded local search over the profile
objective. Stage 2 repeats the search with hazards bounded below by half the
minimum of the stage-1 hazard.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .core.data import ParamBox
from .core.hazard import SplineHazard, tent_transform
from .core.objective import corrected_objective, correction_weights
from .errors import DegenerateDataError, UsageError

log = logging.getLogger(__name__)

# warm restarts: start the barrier path this far below its final weight,
# from the previous solution pulled this far toward its mean level
WARM_T_FRACTION = 1e-4
WARM_SHRINK = 1e-3
LOCAL_METHODS = ("l-bfgs-b", "nelder-mead")


@dataclass(frozen=True)
class FitConfig:
    param_box: ParamBox
    lipschitz_L: float
    tau: float
    # epsilon_n = epsilon_scale / n unless ``epsilon`` pins a value
    epsilon: float = None
    epsilon_scale: float = 1.0
    # inner (node value) solver
    gap_tol: float = 1e-10
    barrier_growth: float = 50.0
    max_newton: int = 5000
    warm_start: bool = True
    # outer (beta) search
    n_starts: int = 8
    local_method: str = "l-bfgs-b"
    local_tol: float = 1e-9
    max_local_iter: int = 200
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.param_box, ParamBox):
            object.__setattr__(self, "param_box", ParamBox.from_dict(self.param_box))
        if self.lipschitz_L < 0:
            raise UsageError("lipschitz_L must be >= 0")
        if self.tau <= 0:
            raise UsageError("tau must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise UsageError("epsilon must be positive")
        if not self.epsilon_scale > 0:
            raise UsageError("epsilon_scale must be positive")
        if not (self.gap_tol > 0 and self.local_tol > 0):
            raise UsageError("tolerances must be positive")
        if self.barrier_growth <= 1:
            raise UsageError("barrier_growth must exceed 1")
        if self.n_starts < 1:
            raise UsageError("n_starts must be >= 1")
        if self.local_method not in LOCAL_METHODS:
            raise UsageError(f"local_method must be one of {LOCAL_METHODS}")

    def epsilon_n(self, n):
        return self.epsilon if self.epsilon is not None else self.epsilon_scale / n

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["param_box"] = self.param_box.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        obj["param_box"] = ParamBox.from_dict(obj["param_box"])
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown fit config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class Estimate:
    hazard: SplineHazard
    beta: np.ndarray
    objective: float
    stage: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def mu(self):
        """Minimum of the estimated hazard over [0, tau]."""
        return self.hazard.minimum()

    @property
    def converged(self):
        return bool(self.diagnostics.get("converged", True))

    def to_dict(self):
        return {
            "stage": self.stage,
            "beta": np.asarray(self.beta).tolist(),
            "objective": self.objective,
            "hazard": self.hazard.to_dict(),
            "mu": self.mu,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(hazard=SplineHazard.from_dict(obj["hazard"]),
                   beta=np.asarray(obj["beta"], dtype=float),
                   objective=float(obj["objective"]), stage=int(obj["stage"]),
                   diagnostics=dict(obj.get("diagnostics", {})))


def data_digest(data):
    h = hashlib.sha256()
    for a in (data.y, data.delta, data.w):
        h.update(np.ascontiguousarray(a).tobytes())
    h.update(repr(data.tau).encode())
    return h.hexdigest()[:16]


class ProfileProblem:
    """Knot structure of a dataset, shared by every beta evaluation.

    Observations are merged on exactly equal times; ``events[k]`` counts the
    uncensored ones at knot ``k``.
    """

    def __init__(self, data, error_model, lipschitz_L):
        if data.n == 0:
            raise UsageError("empty dataset")
        if data.m != error_model.dim:
            raise UsageError("data and error model dimensions differ")
        self.data = data
        self.error_model = error_model
        self.lip = float(lipschitz_L)
        self.knots, self.index = np.unique(data.y, return_inverse=True)
        self.events = np.bincount(self.index, weights=data.delta,
                                  minlength=self.knots.size).astype(float)
        self.gaps = np.diff(self.knots)
        self.s1 = float(self.knots[0])
        self.n = data.n
        self.event_w = data.w.T @ data.delta.astype(float)
        if self.events.sum() > 0 and self.knots[-1] == 0.0:
            raise DegenerateDataError(
                "all observation times are 0 while events are present; "
                "the corrected objective is unbounded")

    @property
    def n_knots(self):
        return self.knots.size

    def weights(self, beta):
        return correction_weights(self.data.w, beta, self.error_model)

    def risk(self, c):
        per_knot = np.bincount(self.index, weights=c, minlength=self.n_knots)
        tail = np.cumsum(per_knot[::-1])[::-1]
        return float(tail[0]), np.ascontiguousarray(tail[1:])

    def reduced(self, v, beta, floor=0.0):
        """Mean reduced objective, gradient and Hessian (diag, offdiag) at ``v``."""
        r0, risk = self.risk(self.weights(beta))
        value, g, hd, ho = kernels.reduced_terms(
            np.asarray(v, dtype=float), self.events, r0, risk, self.gaps,
            self.s1, self.lip, float(floor))
        const = float(self.event_w @ np.asarray(beta, dtype=float))
        return (value + const) / self.n, g / self.n, hd / self.n, ho / self.n

    def beta_gradient(self, v, beta, c, floor):
        """d/dbeta of the mean objective at fixed node values."""
        beta = np.asarray(beta, dtype=float)
        e = self.error_model
        shift = e.mgf_moment(beta) / e.mgf(beta)
        cum = kernels.knot_cumulative(v, self.gaps, self.s1, self.lip, floor)
        lam_y = cum[self.index]
        return (self.event_w - ((self.data.w - shift) * (c * lam_y)[:, None]).sum(axis=0)) / self.n

    def hazard(self, v, floor, tau):
        return tent_transform(self.knots, v, self.lip, tau, floor=floor)


@dataclass
class _ProfileSolution:
    v: np.ndarray
    objective: float
    grad_beta: np.ndarray
    newton_steps: int
    gap: float
    converged: bool


def _snap_censored(prob, v, floor, r0, risk):
    """Lower near-floor censored-only nodes to the lowest feasible value.

    Lowering a node that carries no event can only increase the objective, so
    this recovers exact zeros that the barrier path approaches only
    asymptotically.
    """
    out = v.copy()
    near = (prob.events == 0) & (out - floor < 1e-8)
    if not np.any(near):
        return v
    b = prob.lip * prob.gaps
    for k in np.flatnonzero(near):
        lo = floor
        if k > 0:
            lo = max(lo, out[k - 1] - b[k - 1])
        if k < out.size - 1:
            lo = max(lo, out[k + 1] - b[k])
        out[k] = min(out[k], lo)
    new = kernels.reduced_terms(out, prob.events, r0, risk, prob.gaps, prob.s1,
                                prob.lip, floor)[0]
    old = kernels.reduced_terms(v, prob.events, r0, risk, prob.gaps, prob.s1,
                                prob.lip, floor)[0]
    return out if new >= old else v


def _solve_profile(prob, beta, floor, cfg, v_start=None):
    beta = np.asarray(beta, dtype=float).reshape(-1)
    c = prob.weights(beta)
    r0, risk = prob.risk(c)
    const = float(prob.event_w @ beta)
    k = prob.n_knots
    d_tot = prob.events.sum()
    steps, gap, converged = 0, 0.0, True
    if d_tot == 0:
        v = np.full(k, floor)
    elif prob.lip == 0.0:
        exposure = float(c @ prob.data.y)
        v = np.full(k, max(floor, d_tot / exposure))
    else:
        gap_tol = cfg.gap_tol * prob.n
        n_con = 3 * k - 2
        if (v_start is not None and v_start.size == k
                and np.all(v_start > floor) and cfg.warm_start):
            v0 = (1 - WARM_SHRINK) * v_start + WARM_SHRINK * v_start.mean()
            t0 = max(1.0, WARM_T_FRACTION * n_con / gap_tol)
        else:
            exposure = float(c @ prob.data.y)
            v0 = np.full(k, floor + max(d_tot / exposure, 1e-3))
            t0 = 1.0
        v, steps, gap, converged = kernels.barrier_maximize(
            prob.events, r0, risk, prob.gaps, prob.s1, prob.lip, float(floor),
            v0, t0, gap_tol, cfg.barrier_growth, cfg.max_newton)
        v = _snap_censored(prob, v, floor, r0, risk)
    if prob.lip > 0.0:
        value = kernels.reduced_terms(v, prob.events, r0, risk, prob.gaps,
                                      prob.s1, prob.lip, float(floor))[0]
    else:
        level = v[0]
        exposure = float(c @ prob.data.y)
        value = (d_tot * np.log(level) if d_tot > 0 else 0.0) - level * exposure
    obj = (value + const) / prob.n
    grad = prob.beta_gradient(v, beta, c, float(floor)) if prob.lip > 0 else \
        _constant_beta_gradient(prob, beta, c, v[0])
    return _ProfileSolution(v, obj, grad, int(steps), float(gap) / prob.n,
                            bool(converged))


def _constant_beta_gradient(prob, beta, c, level):
    e = prob.error_model
    shift = e.mgf_moment(beta) / e.mgf(beta)
    lam_y = level * prob.data.y
    return (prob.event_w - ((prob.data.w - shift) * (c * lam_y)[:, None]).sum(axis=0)) / prob.n


def profile_hazard(data, beta, error_model, cfg, floor=0.0):
    """Best hazard for fixed ``beta``: ``(tent spline, mean objective)``."""
    if floor < 0:
        raise UsageError("floor must be >= 0")
    prob = ProfileProblem(data, error_model, cfg.lipschitz_L)
    sol = _solve_profile(prob, beta, floor, cfg)
    return prob.hazard(sol.v, floor, cfg.tau), sol.objective


def reduced_objective(data, beta, error_model, v, lipschitz_L, floor=0.0):
    """Mean objective of the tent spline with node values ``v`` (and gradient)."""
    prob = ProfileProblem(data, error_model, lipschitz_L)
    value, g, _, _ = prob.reduced(v, beta, floor)
    return value, g


class _Search:
    """Outer multistart search over beta with warm-started inner solves."""

    def __init__(self, prob, cfg, floor):
        self.prob = prob
        self.cfg = cfg
        self.floor = floor
        self.box = cfg.param_box
        self.last_v = None
        self.evaluations = 0
        self.newton_steps = 0
        self.all_converged = True
        self.best = None

    def evaluate(self, beta):
        beta = self.box.clip(beta)
        sol = _solve_profile(self.prob, beta, self.floor, self.cfg, self.last_v)
        self.last_v = sol.v
        self.evaluations += 1
        self.newton_steps += sol.newton_steps
        self.all_converged &= sol.converged
        if self.best is None or sol.objective > self.best[1].objective:
            self.best = (beta.copy(), sol)
        return sol

    def local(self, x0):
        free = self.box.upper > self.box.lower
        if not np.any(free):
            sol = self.evaluate(x0)
            return x0, sol.objective, 0
        fixed = self.box.clip(x0)

        def full(z):
            b = fixed.copy()
            b[free] = z
            return b

        bounds = list(zip(self.box.lower[free], self.box.upper[free]))
        if self.cfg.local_method == "l-bfgs-b":
            def fun(z):
                sol = self.evaluate(full(z))
                return -sol.objective, -sol.grad_beta[free]
            res = minimize(fun, fixed[free], jac=True, method="L-BFGS-B",
                           bounds=bounds,
                           options={"ftol": self.cfg.local_tol,
                                    "gtol": self.cfg.local_tol,
                                    "maxiter": self.cfg.max_local_iter})
        else:
            def fun(z):
                return -self.evaluate(full(z)).objective
            res = minimize(fun, fixed[free], method="Nelder-Mead", bounds=bounds,
                           options={"xatol": self.cfg.local_tol,
                                    "fatol": self.cfg.local_tol,
                                    "maxiter": self.cfg.max_local_iter})
        return full(res.x), -float(res.fun), int(res.nit)

    def starts(self, first=None):
        rng = np.random.default_rng(self.cfg.seed)
        pts = [] if first is None else [np.asarray(first, dtype=float)]
        pts += list(self.box.corners()) + [self.box.midpoint]
        extra = max(0, self.cfg.n_starts - len(pts))
        pts += list(self.box.sample(rng, extra))
        uniq = []
        for p in pts:
            if not any(np.array_equal(p, q) for q in uniq):
                uniq.append(p)
        return uniq

    def run(self, first=None):
        finals = []
        for x0 in self.starts(first):
            xb, fb, nit = self.local(x0)
            finals.append((xb, fb, nit))
        return finals


def _fit(data, error_model, cfg, floor, stage, first=None):
    box = cfg.param_box
    if data.m != box.dim or data.m != error_model.dim:
        raise UsageError("dimension mismatch between data, box and error model")
    if data.tau != cfg.tau:
        raise UsageError(f"data tau {data.tau} differs from config tau {cfg.tau}")
    prob = ProfileProblem(data, error_model, cfg.lipschitz_L)
    eps = cfg.epsilon_n(data.n)
    diag = {"epsilon_n": eps, "floor": float(floor), "n": data.n,
            "n_knots": prob.n_knots, "data_digest": data_digest(data)}
    if prob.events.sum() == 0 and floor == 0.0:
        # objective is identically 0 at the zero hazard whatever beta is
        beta = box.midpoint.copy()
        hazard = prob.hazard(np.zeros(prob.n_knots), 0.0, cfg.tau)
        diag.update(evaluations=0, newton_steps=0, converged=True,
                    tie_break="midpoint", inner_gap=0.0, starts=[])
        return Estimate(hazard, beta, corrected_objective(data, hazard, beta, error_model),
                        stage, diag)
    search = _Search(prob, cfg, floor)
    finals = search.run(first)
    beta, sol = search.best
    hazard = prob.hazard(sol.v, floor, cfg.tau)
    objective = corrected_objective(data, hazard, beta, error_model)
    f_vals = np.array([f for _, f, _ in finals])
    b_vals = np.array([b for b, _, _ in finals])
    b = np.asarray(prob.lip * prob.gaps)
    d = np.diff(sol.v)
    diag.update(
        evaluations=search.evaluations,
        newton_steps=search.newton_steps,
        converged=bool(search.all_converged),
        inner_gap=sol.gap,
        active_lipschitz=int(np.sum(b - np.abs(d) <= 1e-7 * np.maximum(b, 1e-300))),
        active_floor=int(np.sum(sol.v - floor <= 1e-8)),
        starts=[{"beta": bb.tolist(), "objective": float(ff), "iterations": it}
                for bb, ff, it in finals],
        multistart_objective_spread=float(f_vals.max() - f_vals.min()),
        multistart_beta_spread=float(np.max(np.ptp(b_vals, axis=0))),
        kernel_objective=sol.objective,
    )
    return Estimate(hazard, beta, objective, stage, diag)


def fit_stage1(data, error_model, cfg):
    """Approximate joint maximiser over the Lipschitz cone times the box."""
    if data.n == 0:
        raise UsageError("empty dataset")
    return _fit(data, error_model, cfg, 0.0, 1)


def fit_stage2(data, error_model, stage1, cfg):
    """Refit with hazards bounded below by half the stage-1 minimum.

    When the stage-1 hazard touches zero the stage-1 estimate is returned
    as is.
    """
    if stage1.stage != 1:
        raise UsageError("fit_stage2 needs a stage-1 estimate")
    digest = stage1.diagnostics.get("data_digest")
    if digest is not None and digest != data_digest(data):
        raise UsageError("stage-1 estimate was computed on a different dataset")
    if stage1.hazard.tau != cfg.tau or stage1.hazard.lipschitz_L != cfg.lipschitz_L:
        raise UsageError("stage-1 estimate was computed with a different tau or L")
    mu = stage1.mu
    if mu <= 0.0:
        return stage1
    est = _fit(data, error_model, cfg, 0.5 * mu, 2, first=stage1.beta)
    est.diagnostics["stage1_mu"] = mu
    return est


def fit(data, error_model, cfg, stage=2):
    """Stage-1 fit, followed by the stage-2 refit when ``stage == 2``."""
    s1 = fit_stage1(data, error_model, cfg)
    if stage == 1:
        return s1, None
    return s1, fit_stage2(data, error_model, s1, cfg)


# --- exhaustive grid oracle -------------------------------------------------

def _grid(lo, hi, step):
    if hi <= lo:
        return np.array([lo])
    k = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(k + 1)


def _tent_piece_area(va, vb, gap, lip, floor):
    """Area of one tent piece by trapezoids through its corner points."""
    h = 0.5 * (va + vb - lip * gap)
    deep = h < floor
    t1 = np.where(deep, (va - floor) / lip, (va - h) / lip)
    t2 = np.where(deep, gap - (vb - floor) / lip, t1)
    hb = np.maximum(h, floor)
    return (0.5 * t1 * (va + hb) + (t2 - t1) * hb
            + 0.5 * (gap - t2) * (hb + vb))


def _left_area(v, s1, lip, floor):
    y0 = v - lip * s1
    inside = y0 >= floor
    t_hit = np.where(inside, 0.0, s1 - (v - floor) / lip)
    return np.where(inside, 0.5 * s1 * (y0 + v),
                    floor * t_hit + 0.5 * (s1 - t_hit) * (floor + v))


def brute_force_fit(data, error_model, box, lipschitz_L, grid_step, floor=0.0,
                    vmax=4.0, beta_step=None):
    """Best point of a (beta, node value) grid, by exact search over the grid.

    For every grid beta the node-value grid is searched exactly with a
    max-plus sweep along the knot chain (the objective couples neighbouring
    knots only), so the returned point is the true grid maximiser. Intended
    as a test oracle for tiny datasets.
    """
    if data.n > 4 or data.m > 2:
        raise UsageError("brute_force_fit is limited to n <= 4 and m <= 2")
    if lipschitz_L <= 0:
        raise UsageError("brute_force_fit needs L > 0")
    beta_step = grid_step if beta_step is None else beta_step
    knots, index = np.unique(data.y, return_inverse=True)
    events = np.bincount(index, weights=data.delta, minlength=knots.size)
    gaps = np.diff(knots)
    vals = _grid(floor, floor + vmax, grid_step)
    with np.errstate(divide="ignore"):
        logv = np.log(vals)
    axes = [_grid(lo, hi, beta_step) for lo, hi in zip(box.lower, box.upper)]
    betas = np.array(np.meshgrid(*axes, indexing="ij")).reshape(box.dim, -1).T
    left = _left_area(vals, knots[0], lipschitz_L, floor)
    pair_area = []
    pair_ok = []
    for gap in gaps:
        va, vb = np.meshgrid(vals, vals, indexing="ij")
        pair_area.append(_tent_piece_area(va, vb, gap, lipschitz_L, floor))
        pair_ok.append(np.abs(vb - va) <= lipschitz_L * gap + 1e-12)
    unary = [events[k] * logv if events[k] > 0 else np.zeros_like(vals)
             for k in range(knots.size)]
    best = (-np.inf, None, None)
    for beta in betas:
        c = correction_weights(data.w, beta, error_model)
        tail = np.cumsum(np.bincount(index, weights=c, minlength=knots.size)[::-1])[::-1]
        score = unary[0] - tail[0] * left
        back = []
        for k, gap in enumerate(gaps):
            pair = np.where(pair_ok[k], -tail[k + 1] * pair_area[k], -np.inf)
            cand = score[:, None] + pair
            arg = np.argmax(cand, axis=0)
            score = cand[arg, np.arange(vals.size)] + unary[k + 1]
            back.append(arg)
        j = int(np.argmax(score))
        total = (score[j] + data.delta @ (data.w @ beta)) / data.n
        if total > best[0]:
            path = [j]
            for arg in reversed(back):
                path.append(int(arg[path[-1]]))
            best = (total, beta.copy(), vals[np.array(path[::-1])])
    obj, beta, v = best
    if beta is None:
        raise UsageError("no feasible grid point with finite objective")
    hazard = tent_transform(knots, v, lipschitz_L, data.tau, floor=floor)
    return Estimate(hazard, beta, corrected_objective(data, hazard, beta, error_model),
                    stage=0, diagnostics={"grid_step": grid_step,
                                          "beta_step": beta_step,
                                          "grid_objective": float(obj)})


__all__ = ["FitConfig", "Estimate", "ProfileProblem", "profile_hazard",
           "reduced_objective", "fit_stage1", "fit_stage2", "fit",
           "brute_force_fit", "data_digest"]
