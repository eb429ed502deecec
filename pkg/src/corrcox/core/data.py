"""Observed data ``(Y_i, Delta_i, W_i)`` and the parameter box for beta."""

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, UsageError


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    delta: np.ndarray
    w: np.ndarray
    tau: float

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        delta = np.array(self.delta).reshape(-1)
        w = np.array(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        if not (y.size == delta.size == w.shape[0]):
            raise DataError("y, delta and w must have the same number of rows")
        if not np.all(np.isin(delta, (0, 1))):
            raise DataError("delta must be 0 or 1")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(w)):
            raise DataError("y and w must be finite")
        tau = float(self.tau)
        if np.any(y < 0) or np.any(y > tau):
            raise DataError(f"y must lie in [0, {tau}]")
        delta = delta.astype(np.int64)
        for a in (y, delta, w):
            a.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self):
        return self.y.size

    @property
    def m(self):
        return self.w.shape[1]

    def __len__(self):
        return self.n

    def subset(self, idx):
        return Dataset(self.y[idx], self.delta[idx], self.w[idx], self.tau)

    def to_csv(self, path=None):
        """Write ``y,delta,w1..wm`` rows; returns the text when ``path`` is None."""
        buf = io.StringIO()
        buf.write(",".join(["y", "delta"] + [f"w{j + 1}" for j in range(self.m)]))
        buf.write("\n")
        for yi, di, wi in zip(self.y, self.delta, self.w):
            buf.write(",".join([repr(float(yi)), str(int(di))]
                               + [repr(float(x)) for x in wi]))
            buf.write("\n")
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path, tau):
        with open(path, newline="") as fh:
            return cls.from_csv_text(fh.read(), tau)

    @classmethod
    def from_csv_text(cls, text, tau):
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty CSV") from None
        m = len(header) - 2
        expected = ["y", "delta"] + [f"w{j + 1}" for j in range(m)]
        if m < 1 or header != expected:
            raise DataError(f"bad header {header}; expected y,delta,w1,...,wm")
        ys, ds, ws = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != m + 2:
                raise DataError(f"row {row_no}: expected {m + 2} fields, got {len(row)}")
            try:
                yi = float(row[0])
                di = row[1].strip()
                wi = [float(c) for c in row[2:]]
            except ValueError:
                raise DataError(f"row {row_no}: not a number") from None
            if di not in ("0", "1"):
                raise DataError(f"row {row_no}: delta must be 0 or 1")
            if not np.isfinite(yi) or not all(np.isfinite(wi)):
                raise DataError(f"row {row_no}: NaN or infinite value")
            if yi < 0 or yi > tau:
                raise DataError(f"row {row_no}: y={yi} outside [0, {tau}]")
            ys.append(yi)
            ds.append(int(di))
            ws.append(wi)
        if not ys:
            raise DataError("CSV has no data rows")
        return cls(np.array(ys), np.array(ds), np.array(ws), tau)


@dataclass(frozen=True, eq=False)
class ParamBox:
    """Axis-aligned compact box for the regression parameter."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise UsageError("box bounds must be nonempty vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UsageError("box bounds must be finite")
        if np.any(lo > hi):
            raise UsageError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, beta):
        return cls(beta, beta)

    @property
    def dim(self):
        return self.lower.size

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def is_singleton(self):
        return bool(np.all(self.lower == self.upper))

    def contains(self, beta, tol=0.0):
        beta = np.asarray(beta, dtype=float)
        return bool(np.all(beta >= self.lower - tol) and np.all(beta <= self.upper + tol))

    def clip(self, beta):
        return np.clip(np.asarray(beta, dtype=float), self.lower, self.upper)

    def corners(self):
        grids = np.meshgrid(*[np.unique([lo, hi]) for lo, hi in zip(self.lower, self.upper)],
                            indexing="ij")
        return np.column_stack([g.ravel() for g in grids])

    def sample(self, rng, size):
        return self.lower + (self.upper - self.lower) * rng.random((size, self.dim))

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["lower"], obj["upper"])
