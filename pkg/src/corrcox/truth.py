"""Known data-generating mechanism for simulations and population quantities."""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .core.data import Dataset, ParamBox
from .core.hazard import SplineHazard, linear_hazard
from .core.measurement import ErrorModel
from .errors import ConditionError, DataError, DomainError


@dataclass(frozen=True, eq=False)
class CovariateLaw:
    """Law of the true covariate X: finite support or multivariate normal."""

    kind: str
    atoms: np.ndarray = None
    probs: np.ndarray = None
    mean: np.ndarray = None
    cov: np.ndarray = None
    hermite_nodes: int = 40

    def __post_init__(self):
        if self.kind == "finite":
            atoms = np.asarray(self.atoms, dtype=float)
            atoms = atoms.reshape(-1, 1) if atoms.ndim == 1 else atoms
            probs = np.asarray(self.probs, dtype=float).reshape(-1)
            if atoms.shape[0] != probs.size or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
                raise DataError("finite covariate law needs one probability per atom, summing to 1")
            object.__setattr__(self, "atoms", atoms)
            object.__setattr__(self, "probs", probs)
        elif self.kind == "gaussian":
            cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
            mean = np.zeros(cov.shape[0]) if self.mean is None else np.asarray(self.mean, dtype=float).reshape(-1)
            if mean.size != cov.shape[0]:
                raise DataError("covariate mean and covariance sizes differ")
            object.__setattr__(self, "cov", cov)
            object.__setattr__(self, "mean", mean)
        else:
            raise DataError(f"unknown covariate law {self.kind!r}")

    @property
    def dim(self):
        return self.atoms.shape[1] if self.kind == "finite" else self.mean.size

    def quadrature(self):
        """Nodes and weights that integrate functions of X exactly (finite
        support) or by tensor Gauss-Hermite rules (normal)."""
        if self.kind == "finite":
            return self.atoms, self.probs
        z, wz = hermegauss(self.hermite_nodes)
        wz = wz / wz.sum()
        m = self.dim
        grids = np.meshgrid(*([z] * m), indexing="ij")
        zs = np.column_stack([g.ravel() for g in grids])
        ws = np.prod(np.meshgrid(*([wz] * m), indexing="ij"), axis=0).ravel()
        vals, vecs = np.linalg.eigh(self.cov)
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
        return self.mean + zs @ factor.T, ws

    def covariance(self):
        if self.kind == "gaussian":
            return self.cov
        mu = self.probs @ self.atoms
        c = self.atoms - mu
        return (c * self.probs[:, None]).T @ c

    def sample(self, rng, size):
        if self.kind == "finite":
            return self.atoms[rng.choice(self.probs.size, size=size, p=self.probs)]
        vals, vecs = np.linalg.eigh(self.cov)
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
        return self.mean + rng.standard_normal((size, self.dim)) @ factor.T

    def to_dict(self):
        if self.kind == "finite":
            return {"kind": "finite", "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}
        return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, obj):
        kind = obj.get("kind")
        if kind == "finite":
            return cls("finite", atoms=obj["atoms"], probs=obj["probs"])
        if kind == "gaussian":
            return cls("gaussian", mean=obj.get("mean"), cov=obj["cov"])
        raise DataError(f"unknown covariate law {kind!r}")


@dataclass(frozen=True)
class CensorLaw:
    """Mixture of Uniform[low, high] (weight ``1 - atom_weight``) and a point
    mass at ``tau``. ``atom_weight=1`` gives C identically equal to tau."""

    low: float = 0.0
    high: float = 1.0
    atom_weight: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.atom_weight <= 1.0:
            raise DataError("atom_weight must be in [0, 1]")
        if self.atom_weight < 1.0 and not 0.0 <= self.low < self.high:
            raise DataError("need 0 <= low < high for the uniform part")

    def survival(self, u):
        """``G_C(u) = P(C >= u)`` for u in [0, tau]."""
        u = np.asarray(u, dtype=float)
        if self.atom_weight >= 1.0:
            return np.ones_like(u)
        unif = np.clip((self.high - u) / (self.high - self.low), 0.0, 1.0)
        return self.atom_weight + (1.0 - self.atom_weight) * unif

    def kinks(self):
        return [] if self.atom_weight >= 1.0 else [self.low, self.high]

    def sample(self, rng, size, tau):
        at_tau = rng.random(size) < self.atom_weight
        unif = rng.uniform(self.low, self.high, size) if self.atom_weight < 1.0 else np.full(size, tau)
        return np.where(at_tau, tau, unif)

    def to_dict(self):
        return {"low": self.low, "high": self.high, "atom_weight": self.atom_weight}

    @classmethod
    def from_dict(cls, obj):
        return cls(float(obj.get("low", 0.0)), float(obj.get("high", 1.0)),
                   float(obj.get("atom_weight", 0.0)))


@dataclass(frozen=True, eq=False)
class Truth:
    hazard0: SplineHazard
    beta0: np.ndarray
    covariate: CovariateLaw
    censor: CensorLaw
    error_model: ErrorModel
    lipschitz_L: float
    param_box: ParamBox = field(default=None)

    def __post_init__(self):
        beta0 = np.asarray(self.beta0, dtype=float).reshape(-1)
        beta0.setflags(write=False)
        object.__setattr__(self, "beta0", beta0)
        if self.covariate.dim != beta0.size or self.error_model.dim != beta0.size:
            raise DataError("beta0, covariate law and error model dimensions differ")
        if self.param_box is not None and self.param_box.dim != beta0.size:
            raise DataError("parameter box dimension differs from beta0")
        if self.censor.atom_weight < 1.0 and self.censor.high > self.tau:
            raise ConditionError("v", "censoring must be supported on [0, tau]")

    @property
    def tau(self):
        return self.hazard0.tau

    @property
    def dim(self):
        return self.beta0.size

    def check_conditions(self, normality=False):
        """Raise :class:`ConditionError` naming the first violated condition."""
        h = self.hazard0
        if h.minimum() <= 0.0:
            raise ConditionError("vii", "lambda0 must be positive on [0, tau] "
                                        f"(its minimum is {h.minimum():g})")
        if h.max_slope() > self.lipschitz_L * (1 + 1e-12):
            raise ConditionError("i", f"lambda0 slope {h.max_slope():g} exceeds L={self.lipschitz_L:g}")
        if self.param_box is not None and not self.param_box.contains(self.beta0):
            raise ConditionError("vii", "beta0 must lie in the parameter box")
        cov = self.covariate.covariance()
        if np.linalg.eigvalsh(cov).min() <= 1e-12:
            raise ConditionError("vi", "covariance of X must be positive definite")
        c = self.censor
        if c.atom_weight <= 0.0 and c.high < self.tau:
            raise ConditionError("v", "tau must be the right endpoint of the censoring law")
        if normality:
            box = self.param_box
            if box is not None and not (np.all(self.beta0 > box.lower) and np.all(self.beta0 < box.upper)):
                raise ConditionError("viii", "beta0 must be an interior point of the box")
            if h.max_slope() >= self.lipschitz_L:
                raise ConditionError("ix", "lambda0 slope must be strictly below L")
        return True

    def conditional_survival(self, t, x):
        """``G_T(t | x) = exp(-exp(beta0'x) Lambda0(t))``; broadcasts t against rows of x."""
        x = np.atleast_2d(x)
        lam = self.hazard0.cumulative(np.asarray(t, dtype=float))
        return np.exp(-np.multiply.outer(lam, np.exp(x @ self.beta0)))

    def inverse_cumulative(self, target):
        """``Lambda0^{-1}`` by exact inversion of each quadratic piece; ``inf``
        where the target exceeds ``Lambda0(tau)``."""
        bt, bv = self.hazard0.breakpoints
        cum = self.hazard0._cumulative_at_breakpoints
        target = np.asarray(target, dtype=float)
        if bv.min() <= 0.0:
            raise DomainError("lambda0 has zeros; its cumulative hazard is not invertible")
        j = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, bt.size - 2)
        slope = np.diff(bv)[j] / np.where(np.diff(bt)[j] > 0, np.diff(bt)[j], 1.0)
        rem = target - cum[j]
        lam_j = bv[j]
        # stable root of lam_j*x + slope*x^2/2 = rem
        x = 2.0 * rem / (lam_j + np.sqrt(np.maximum(lam_j * lam_j + 2.0 * slope * rem, 0.0)))
        out = bt[j] + x
        return np.where(target > cum[-1], np.inf, np.minimum(out, bt[-1]))

    def draw(self, rng, n):
        """Full draw ``(X, T, C, U)`` plus the observed ``(Y, Delta, W)``.

        Random numbers are consumed in a fixed order: X, the exponential for
        T, C, U.
        """
        x = self.covariate.sample(rng, n)
        e = rng.exponential(size=n)
        t = self.inverse_cumulative(e * np.exp(-x @ self.beta0))
        c = self.censor.sample(rng, n, self.tau)
        u = self.error_model.sample(rng, n)
        y = np.minimum(t, c)
        delta = (t <= c).astype(np.int64)
        return {"x": x, "t": t, "c": c, "u": u, "y": y, "delta": delta, "w": x + u}

    def sample_dataset(self, n, rng):
        if n < 1:
            raise DataError("sample size must be >= 1")
        d = self.draw(rng, n)
        return Dataset(d["y"], d["delta"], d["w"], self.tau)

    def to_dict(self):
        out = {
            "hazard0": self.hazard0.to_dict(),
            "beta0": self.beta0.tolist(),
            "covariate": self.covariate.to_dict(),
            "censor": self.censor.to_dict(),
            "error_model": self.error_model.to_dict(),
            "L": self.lipschitz_L,
        }
        if self.param_box is not None:
            out["param_box"] = self.param_box.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj):
        try:
            box = obj.get("param_box")
            return cls(hazard0=SplineHazard.from_dict(obj["hazard0"]),
                       beta0=obj["beta0"],
                       covariate=CovariateLaw.from_dict(obj["covariate"]),
                       censor=CensorLaw.from_dict(obj.get("censor", {})),
                       error_model=ErrorModel.from_dict(obj.get("error_model", {"kind": "none", "dim": len(obj["beta0"])})),
                       lipschitz_L=float(obj["L"]),
                       param_box=None if box is None else ParamBox.from_dict(box))
        except KeyError as exc:
            raise DataError(f"truth JSON missing key {exc}") from None


def default_truth(error_sigma=0.3):
    """tau = 1, lambda0(t) = 0.5 + 0.4 t, L = 1, beta0 = 0.7, X uniform on
    {-1, 0, 1}, C ~ 0.8 Uniform[0.2, 1] + 0.2 delta_tau, U ~ N(0, sigma^2)."""
    error = ErrorModel.isotropic(error_sigma) if error_sigma > 0 else ErrorModel.none(1)
    return Truth(
        hazard0=linear_hazard(0.5, 0.4, 1.0, lipschitz_L=1.0),
        beta0=[0.7],
        covariate=CovariateLaw("finite", atoms=[-1.0, 0.0, 1.0], probs=[1 / 3, 1 / 3, 1 / 3]),
        censor=CensorLaw(0.2, 1.0, 0.2),
        error_model=error,
        lipschitz_L=1.0,
        param_box=ParamBox([-3.0], [3.0]),
    )
