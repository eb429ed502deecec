"""Known laws of the additive measurement error ``U`` in ``W = X + U``."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConditionError, DataError

KINDS = ("none", "gaussian", "finite")


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """Measurement-error law, described by enough to give its mgf.

    Build with :meth:`none`, :meth:`gaussian` or :meth:`finite`.
    """

    kind: str
    dim: int
    cov: np.ndarray = field(default=None)
    atoms: np.ndarray = field(default=None)
    probs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown error model {self.kind!r}")
        if self.dim < 1:
            raise DataError("dimension must be >= 1")
        if self.kind == "gaussian":
            cov = np.array(self.cov, dtype=float).reshape(self.dim, self.dim)
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise DataError("gaussian covariance must be symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-12:
                raise DataError("gaussian covariance must be PSD")
            cov.setflags(write=False)
            object.__setattr__(self, "cov", cov)
        elif self.kind == "finite":
            atoms = np.array(self.atoms, dtype=float).reshape(-1, self.dim)
            probs = np.array(self.probs, dtype=float).reshape(-1)
            if atoms.shape[0] != probs.size or probs.size == 0:
                raise DataError("need one probability per atom")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise DataError("probabilities must be nonnegative and sum to 1")
            mean = probs @ atoms
            if np.max(np.abs(mean)) > 1e-12:
                raise ConditionError("iii", f"E U must be 0, got {mean.tolist()}")
            atoms.setflags(write=False)
            probs.setflags(write=False)
            object.__setattr__(self, "atoms", atoms)
            object.__setattr__(self, "probs", probs)

    @classmethod
    def none(cls, dim=1):
        return cls("none", dim)

    @classmethod
    def gaussian(cls, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls("gaussian", cov.shape[0], cov=cov)

    @classmethod
    def isotropic(cls, sigma, dim=1):
        return cls.gaussian(sigma ** 2 * np.eye(dim))

    @classmethod
    def finite(cls, atoms, probs):
        atoms = np.asarray(atoms, dtype=float)
        dim = 1 if atoms.ndim == 1 else atoms.shape[1]
        return cls("finite", dim, atoms=atoms, probs=probs)

    def _beta(self, beta):
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.size != self.dim:
            raise DataError(f"beta has dimension {beta.size}, expected {self.dim}")
        return beta

    def mgf(self, beta):
        """``E exp(beta' U)``."""
        beta = self._beta(beta)
        if self.kind == "none":
            return 1.0
        if self.kind == "gaussian":
            return float(np.exp(0.5 * beta @ self.cov @ beta))
        return float(self.probs @ np.exp(self.atoms @ beta))

    def mgf_moment(self, beta):
        """``E[U exp(beta' U)]``, the gradient of the mgf."""
        beta = self._beta(beta)
        if self.kind == "none":
            return np.zeros(self.dim)
        if self.kind == "gaussian":
            return self.cov @ beta * self.mgf(beta)
        return (self.probs * np.exp(self.atoms @ beta)) @ self.atoms

    def sample(self, rng, size):
        if self.kind == "none":
            return np.zeros((size, self.dim))
        if self.kind == "gaussian":
            vals, vecs = np.linalg.eigh(self.cov)
            factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
            return rng.standard_normal((size, self.dim)) @ factor.T
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return self.atoms[idx]

    def to_dict(self):
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "gaussian":
            out["cov"] = self.cov.tolist()
        elif self.kind == "finite":
            out["atoms"] = self.atoms.tolist()
            out["probs"] = self.probs.tolist()
        return out

    @classmethod
    def from_dict(cls, obj):
        kind = obj.get("kind", "none")
        if kind == "none":
            return cls.none(int(obj.get("dim", 1)))
        if kind == "gaussian":
            if "sigma" in obj:
                return cls.isotropic(float(obj["sigma"]), int(obj.get("dim", 1)))
            return cls.gaussian(obj["cov"])
        if kind == "finite":
            return cls.finite(obj["atoms"], obj["probs"])
        raise DataError(f"unknown error model kind {kind!r}")


def mgf(e, beta):
    return e.mgf(beta)


def mgf_moment(e, beta):
    return e.mgf_moment(beta)
