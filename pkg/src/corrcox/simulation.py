"""Datasets from a known truth and the Monte Carlo consistency and normality
studies.

Every replicate draws from its own generator seeded by
``(seed, size index, replicate index)``, so results do not depend on the
number of worker threads or on completion order.
"""

import csv
import io
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import asymptotics as asy
from .errors import ConvergenceError, CorrcoxError, DomainError, UsageError
from .estimator import FitConfig, fit_stage1, fit_stage2
from .truth import Truth, default_truth

STUDY_KINDS = ("consistency", "normality")
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
MAX_FAILURE_FRACTION = 0.10


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_dataset(truth, n, seed):
    """Draw ``n`` records ``(Y, Delta, W)``; ``seed`` is anything accepted by
    :func:`numpy.random.default_rng`, or a generator."""
    if truth.hazard0.minimum() <= 0.0:
        raise DomainError("condition (vii): lambda0 must be positive to invert its cumulative hazard")
    return truth.sample_dataset(n, _rng(seed))


def replicate_seed(seed, size_index, rep):
    return np.random.SeedSequence([int(seed), int(size_index), int(rep)])


def sup_error(hazard, truth_hazard, upto=None):
    """Exact ``sup |hazard - truth_hazard|`` over ``[0, upto]``; both are
    piecewise linear, so the max sits at a breakpoint of either."""
    return hazard.sup_distance(truth_hazard, upto)


@dataclass(frozen=True, eq=False)
class StudyConfig:
    truth: Truth
    sizes: tuple
    reps: int
    fit: FitConfig
    f_names: tuple = ("one", "t")
    seed: int = 0
    threads: int = 1
    trim_fraction: float = 0.05
    grid_nodes: int = asy.DEFAULT_NODES
    asym_reps: int = asy.DEFAULT_REPS

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "f_names", tuple(self.f_names))
        if not sizes or any(s < 1 for s in sizes):
            raise UsageError("sample sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise UsageError("sample sizes must be strictly increasing")
        if self.reps < 1:
            raise UsageError("need at least one replicate")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if not 0.0 <= self.trim_fraction < 1.0:
            raise UsageError("trim_fraction must be in [0, 1)")
        if self.fit.tau != self.truth.tau:
            raise UsageError("fit config tau differs from the truth's tau")

    @classmethod
    def default(cls, sizes=(100, 400, 1600), reps=200, seed=0, threads=1, **kw):
        truth = default_truth()
        fit = FitConfig(param_box=truth.param_box, lipschitz_L=truth.lipschitz_L, tau=truth.tau)
        return cls(truth=truth, sizes=sizes, reps=reps, fit=fit, seed=seed, threads=threads, **kw)

    def to_dict(self):
        return {"truth": self.truth.to_dict(), "sizes": list(self.sizes), "reps": self.reps,
                "fit": self.fit.to_dict(), "f": list(self.f_names), "seed": self.seed,
                "trim_fraction": self.trim_fraction,
                "grid_nodes": self.grid_nodes, "asym_reps": self.asym_reps}

    @classmethod
    def from_dict(cls, obj, seed=None, threads=None):
        """Build from a JSON-style mapping. ``truth`` may be ``"default"``;
        ``fit`` may omit ``param_box``, ``lipschitz_L`` and ``tau``, which
        then come from the truth."""
        obj = dict(obj)
        t = obj.pop("truth", "default")
        truth = default_truth() if t == "default" else Truth.from_dict(t)
        fit = dict(obj.pop("fit", {}))
        box = truth.param_box.to_dict() if truth.param_box is not None else None
        fit.setdefault("param_box", box)
        fit.setdefault("lipschitz_L", truth.lipschitz_L)
        fit.setdefault("tau", truth.tau)
        if fit["param_box"] is None:
            raise UsageError("no parameter box in the fit config or the truth")
        kw = {"truth": truth, "fit": FitConfig.from_dict(fit)}
        if "f" in obj:
            kw["f_names"] = obj.pop("f")
        known = {"sizes", "reps", "seed", "threads", "trim_fraction", "grid_nodes", "asym_reps"}
        unknown = set(obj) - known
        if unknown:
            raise UsageError(f"unknown study config keys: {sorted(unknown)}")
        kw.update(obj)
        if seed is not None:
            kw["seed"] = seed
        if threads is not None:
            kw["threads"] = threads
        if "sizes" not in kw or "reps" not in kw:
            raise UsageError("study config needs 'sizes' and 'reps'")
        return cls(**kw)


@dataclass(eq=False)
class StudyReport:
    kind: str
    config: dict
    sizes: list = field(default_factory=list)
    replicates: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    trend: dict = field(default_factory=dict)
    asymptotics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "config": self.config, "sizes": self.sizes,
                "failures": self.failures, "warnings": self.warnings,
                "trend": self.trend, "asymptotics": self.asymptotics}

    def replicate_csv(self):
        """Per-replicate rows ``n,rep,beta_hat_1..m,supnorm_full,supnorm_trim,objective,stage``."""
        m = len(self.config["truth"]["beta0"])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "rep"] + [f"beta_hat_{j + 1}" for j in range(m)]
                        + ["supnorm_full", "supnorm_trim", "objective", "stage"])
        for rec in self.replicates:
            for st in rec["stages"]:
                writer.writerow([rec["n"], rec["rep"]] + [repr(b) for b in st["beta"]]
                                + [repr(st["supnorm_full"]), repr(st["supnorm_trim"]),
                                   repr(st["objective"]), st["stage"]])
        return buf.getvalue()


def _stage_record(est, truth, trim_at):
    return {"stage": est.stage, "beta": [float(b) for b in est.beta],
            "objective": float(est.objective),
            "supnorm_full": sup_error(est.hazard, truth.hazard0),
            "supnorm_trim": sup_error(est.hazard, truth.hazard0, trim_at),
            "beta_error": float(np.linalg.norm(est.beta - truth.beta0)),
            "converged": est.converged}


def _run_replicate(cfg, kind, size_index, rep, functionals):
    truth = cfg.truth
    n = cfg.sizes[size_index]
    rec = {"n": n, "rep": rep, "size_index": size_index}
    try:
        data = sample_dataset(truth, n, replicate_seed(cfg.seed, size_index, rep))
        trim_at = (1.0 - cfg.trim_fraction) * truth.tau
        s1 = fit_stage1(data, truth.error_model, cfg.fit)
        rec["stages"] = [_stage_record(s1, truth, trim_at)]
        if kind == "normality":
            s2 = fit_stage2(data, truth.error_model, s1, cfg.fit)
            rec["stages"].append(_stage_record(s2, truth, trim_at))
            mu1 = s1.mu
            rec["mu1"] = mu1
            rec["min_lambda2"] = s2.hazard.minimum()
            rec["floor_slack"] = rec["min_lambda2"] - 0.5 * mu1 if mu1 > 0 else None
            rec["functional"] = {
                name: float(np.sqrt(n) * (asy.weighted_hazard_integral(
                    s2.hazard, f, grid, truth.censor) - base))
                for name, (f, grid, base) in functionals.items()}
    except (CorrcoxError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _quantiles(x):
    x = np.asarray(x, dtype=float)
    return {str(q): float(np.quantile(x, q)) for q in QUANTILES}


def _var(x):
    x = np.asarray(x, dtype=float)
    return float(np.var(x, ddof=1)) if x.size > 1 else 0.0


def _normality_diagnostics(z):
    """Skew, excess kurtosis and the Anderson-Darling normality statistic of
    the standardized sample, with the AD critical value at the 1% level."""
    z = np.asarray(z, dtype=float)
    out = {"skew": 0.0, "excess_kurtosis": 0.0, "anderson_darling": None,
           "ad_critical_1pct": None, "ad_pass_1pct": None, "qq_max_discrepancy": None}
    if z.size < 8 or np.ptp(z) == 0.0:
        return out
    out["skew"] = float(stats.skew(z))
    out["excess_kurtosis"] = float(stats.kurtosis(z))
    ad = stats.anderson(z, dist="norm")
    crit = float(ad.critical_values[list(ad.significance_level).index(1.0)])
    out.update(anderson_darling=float(ad.statistic), ad_critical_1pct=crit,
               ad_pass_1pct=bool(ad.statistic < crit))
    zs = np.sort((z - z.mean()) / z.std(ddof=1))
    theo = stats.norm.ppf((np.arange(1, z.size + 1) - 0.5) / z.size)
    out["qq_max_discrepancy"] = float(np.max(np.abs(zs - theo)))
    return out


def _summarize_size(n, recs, kind, tables, sols, dim, beta0):
    ok = [r for r in recs if "error" not in r]
    s1 = [r["stages"][0] for r in ok]
    out = {"n": n, "replicates": len(recs), "failures": len(recs) - len(ok)}
    if not ok:
        return out
    out["supnorm_full"] = _quantiles([s["supnorm_full"] for s in s1])
    out["supnorm_trim"] = _quantiles([s["supnorm_trim"] for s in s1])
    out["beta_error"] = _quantiles([s["beta_error"] for s in s1])
    out["beta_mean"] = np.mean([s["beta"] for s in s1], axis=0).tolist()
    if kind != "normality":
        return out
    s2 = [r["stages"][1] for r in ok]
    z = np.sqrt(n) * (np.array([s["beta"] for s in s2]).reshape(-1, dim) - beta0)
    cov = np.atleast_2d(np.cov(z, rowvar=False)) if len(ok) > 1 else np.zeros((dim, dim))
    cov = 0.5 * (cov + cov.T)
    sand = tables.sandwich
    out["stage2"] = {
        "scaled_beta_mean": z.mean(axis=0).tolist(),
        "empirical_cov": cov.tolist(),
        "sandwich": sand.tolist(),
        "variance_ratio": (np.diag(cov) / np.diag(sand)).tolist(),
        "normality": [_normality_diagnostics(z[:, j] / np.sqrt(sand[j, j])) for j in range(dim)],
        "supnorm_trim": _quantiles([s["supnorm_trim"] for s in s2]),
    }
    slack = [r["floor_slack"] for r in ok if r["floor_slack"] is not None]
    out["floor"] = {"checked": len(slack),
                    "min_slack": float(min(slack)) if slack else None,
                    "violations": int(sum(s < -1e-12 for s in slack))}
    fun = {}
    for name, sol in sols.items():
        vals = np.array([r["functional"][name] for r in ok])
        var = _var(vals)
        fun[name] = {"mean": float(vals.mean()), "variance": var, "sigma_sq": sol.sigma_sq,
                     "variance_ratio": var / sol.sigma_sq if sol.sigma_sq > 0 else None}
    out["functional"] = fun
    return out


def _strictly_decreasing(vals):
    return bool(all(b < a for a, b in zip(vals, vals[1:])))


def _run_study(cfg, kind):
    if kind not in STUDY_KINDS:
        raise UsageError(f"study kind must be one of {STUDY_KINDS}")
    truth = cfg.truth
    truth.check_conditions(normality=(kind == "normality"))
    report = StudyReport(kind=kind, config=cfg.to_dict())
    tables, sols, functionals = None, {}, {}
    if kind == "normality":
        tables = asy.build_tables(truth, cfg.grid_nodes, cfg.asym_reps, cfg.seed)
        for name in cfg.f_names:
            f = asy.named_weight(name, tables.grid)
            sols[name] = asy.solve_fredholm(f, tables, truth, cfg.asym_reps, cfg.seed + 1)
            base = asy.weighted_hazard_integral(truth.hazard0, f, tables.grid, truth.censor)
            functionals[name] = (f, tables.grid, base)
        report.asymptotics = {
            **tables.to_dict(),
            "sigma_phi": {k: {"sigma_sq": s.sigma_sq, "sigma_sq_se": s.sigma_sq_se,
                              "residual": s.residual} for k, s in sols.items()},
        }
    if cfg.reps < 2:
        report.warnings.append("fewer than 2 replicates per size: dispersion summaries are degenerate")
    tasks = [(i, r) for i in range(len(cfg.sizes)) for r in range(cfg.reps)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        recs = list(pool.map(lambda t: _run_replicate(cfg, kind, t[0], t[1], functionals), tasks))
    report.replicates = [r for r in recs if "error" not in r]
    report.failures = [{"n": r["n"], "rep": r["rep"], "error": r["error"]}
                       for r in recs if "error" in r]
    for i, n in enumerate(cfg.sizes):
        group = [r for r in recs if r["size_index"] == i]
        report.sizes.append(_summarize_size(n, group, kind, tables, sols, truth.dim, truth.beta0))
    if len(report.failures) > MAX_FAILURE_FRACTION * len(recs):
        exc = ConvergenceError(f"{len(report.failures)} of {len(recs)} replicate fits failed")
        exc.report = report
        raise exc
    if report.failures:
        warnings.warn(f"{len(report.failures)} replicate fits failed", RuntimeWarning)
    med = {key: [s[key]["0.5"] for s in report.sizes if key in s]
           for key in ("supnorm_trim", "supnorm_full", "beta_error")}
    report.trend = {f"median_{k}": v for k, v in med.items()}
    report.trend.update({f"{k}_strictly_decreasing": _strictly_decreasing(v) for k, v in med.items()})
    return report


def run_consistency_study(cfg):
    """Stage-1 fits at each sample size; needs at least three sizes."""
    if len(cfg.sizes) < 3:
        raise UsageError("the consistency study needs at least three sample sizes")
    return _run_study(cfg, "consistency")


def run_normality_study(cfg):
    """Stage-1 and stage-2 fits, compared against the sandwich covariance and
    the functional variances from the Fredholm solutions."""
    return _run_study(cfg, "normality")
