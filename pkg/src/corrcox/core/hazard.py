"""Piecewise-linear baseline hazards on ``[0, tau]``.

A :class:`SplineHazard` is stored through its node values, but every
evaluation goes through the exact breakpoint representation of the
piecewise-linear function: evaluation is linear interpolation between
breakpoints and integration is the trapezoid rule over them, so both are
exact.
"""

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import ConstraintError, DataError, DomainError

#: absolute slack allowed when checking Lipschitz / floor constraints
FEAS_TOL = 1e-9

MODES = ("tent", "interp")


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SplineHazard:
    """Nonnegative Lipschitz hazard determined by values at knots.

    ``mode="tent"`` is the pointwise-smallest function with slopes bounded by
    ``lipschitz_L``, bounded below by ``floor`` and passing through the node
    values: ``max(floor, max_k(values[k] - L*|t - knots[k]|))``.
    ``mode="interp"`` joins the nodes by straight lines and is constant
    outside the outermost knots.
    """

    tau: float
    lipschitz_L: float
    knots: np.ndarray
    values: np.ndarray
    mode: str = "tent"
    floor: float = 0.0

    def __post_init__(self):
        knots = _readonly(self.knots).reshape(-1)
        values = _readonly(self.values).reshape(-1)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "lipschitz_L", float(self.lipschitz_L))
        object.__setattr__(self, "floor", float(self.floor))
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r}")
        if not self.tau > 0 or not np.isfinite(self.tau):
            raise DomainError("tau must be positive and finite")
        if not self.lipschitz_L >= 0 or not np.isfinite(self.lipschitz_L):
            raise DomainError("lipschitz_L must be finite and nonnegative")
        if knots.size == 0 or knots.size != values.size:
            raise DataError("knots and values must be nonempty and of equal length")
        if not np.all(np.isfinite(knots)) or not np.all(np.isfinite(values)):
            raise DataError("knots and values must be finite")
        if knots[0] < 0 or knots[-1] > self.tau:
            raise DomainError("knots must lie in [0, tau]")
        if np.any(np.diff(knots) <= 0):
            raise DataError("knots must be strictly increasing")
        if self.floor < 0:
            raise ConstraintError("floor must be nonnegative")
        if np.any(values < self.floor - FEAS_TOL):
            raise ConstraintError("node values must be >= floor (and >= 0)")
        slack = self.lipschitz_L * np.diff(knots) - np.abs(np.diff(values))
        if np.any(slack < -FEAS_TOL * (1.0 + np.abs(values[1:]))):
            raise ConstraintError(
                "adjacent node values violate the Lipschitz bound "
                f"(worst excess {-slack.min():.3g})")

    @cached_property
    def breakpoints(self):
        """``(t, value)`` arrays of the piecewise-linear function on [0, tau]."""
        if self.mode == "interp":
            t = self.knots
            v = self.values
            if t[0] > 0:
                t = np.r_[0.0, t]
                v = np.r_[v[0], v]
            if t[-1] < self.tau:
                t = np.r_[t, self.tau]
                v = np.r_[v, v[-1]]
            return _readonly(t), _readonly(v)
        return _tent_breakpoints(self.knots, self.values, self.lipschitz_L,
                                 self.tau, self.floor)

    @cached_property
    def _cumulative_at_breakpoints(self):
        t, v = self.breakpoints
        return np.r_[0.0, np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))]

    def _check_domain(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > self.tau):
            raise DomainError(f"time outside [0, {self.tau}]")
        return t

    def __call__(self, t):
        t = self._check_domain(t)
        bt, bv = self.breakpoints
        out = np.interp(t, bt, bv)
        return float(out) if out.ndim == 0 else out

    def cumulative(self, y):
        """Exact integral of the hazard over ``[0, y]``."""
        y = self._check_domain(y)
        bt, bv = self.breakpoints
        cum = self._cumulative_at_breakpoints
        idx = np.clip(np.searchsorted(bt, y, side="right") - 1, 0, bt.size - 2)
        left = bt[idx]
        val = np.interp(y, bt, bv)
        out = cum[idx] + 0.5 * (y - left) * (bv[idx] + val)
        return float(out) if out.ndim == 0 else out

    def integrate(self, a, b):
        """Exact integral over ``[a, b]`` computed from the breakpoints inside it."""
        a = float(self._check_domain(a))
        b = float(self._check_domain(b))
        if b < a:
            return -self.integrate(b, a)
        bt, bv = self.breakpoints
        inner = bt[(bt > a) & (bt < b)]
        t = np.r_[a, inner, b]
        v = np.interp(t, bt, bv)
        return float(np.sum(0.5 * np.diff(t) * (v[1:] + v[:-1])))

    def minimum(self):
        """``min_t lambda(t)`` over [0, tau] (attained at a breakpoint)."""
        return float(self.breakpoints[1].min())

    def maximum(self):
        return float(self.breakpoints[1].max())

    def max_slope(self):
        bt, bv = self.breakpoints
        dt = np.diff(bt)
        keep = dt > 0
        if not np.any(keep):
            return 0.0
        return float(np.max(np.abs(np.diff(bv)[keep] / dt[keep])))

    def in_cone(self, lipschitz_L=None, tol=FEAS_TOL):
        """Membership in the Lipschitz cone: nonnegative with slopes <= L."""
        lip = self.lipschitz_L if lipschitz_L is None else lipschitz_L
        bt, bv = self.breakpoints
        slack = lip * np.diff(bt) * (1 + tol) - np.abs(np.diff(bv))
        return bool(self.minimum() >= -tol
                    and np.all(slack >= -tol * (1.0 + np.abs(bv[1:]))))

    def sup_distance(self, other, upto=None):
        """``max |self - other|`` over ``[0, upto]`` (exact for two splines)."""
        upto = self.tau if upto is None else upto
        t = np.union1d(self.breakpoints[0], other.breakpoints[0])
        t = np.r_[t[t < upto], upto]
        return float(np.max(np.abs(self(t) - other(t))))

    def to_dict(self):
        return {
            "tau": self.tau,
            "L": self.lipschitz_L,
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "mode": self.mode,
            "floor": self.floor,
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(tau=obj["tau"], lipschitz_L=obj["L"], knots=obj["knots"],
                       values=obj["values"], mode=obj.get("mode", "tent"),
                       floor=obj.get("floor", 0.0))
        except KeyError as exc:
            raise DataError(f"hazard JSON missing key {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"SplineHazard(mode={self.mode!r}, tau={self.tau}, "
                f"L={self.lipschitz_L}, knots={self.knots.size}, "
                f"floor={self.floor})")


def _tent_breakpoints(s, v, lip, tau, floor):
    if lip == 0.0:
        c = max(float(v[0]), floor)
        return _readonly([0.0, tau]), _readonly([c, c])
    ts = []
    vs = []
    # left boundary piece
    if s[0] > 0:
        y0 = v[0] - lip * s[0]
        if y0 >= floor:
            ts.append([0.0])
            vs.append([y0])
        else:
            ts.append([0.0, s[0] - (v[0] - floor) / lip])
            vs.append([floor, floor])
    # knots and the bottom of each interior V
    if s.size > 1:
        va, vb = v[:-1], v[1:]
        gap = np.diff(s)
        h = 0.5 * (va + vb - lip * gap)
        deep = h < floor
        tb = s[:-1] + (va - h) / lip
        t1 = np.where(deep, s[:-1] + (va - floor) / lip, tb)
        t2 = np.where(deep, s[1:] - (vb - floor) / lip, tb)
        hb = np.maximum(h, floor)
        t1 = np.clip(t1, s[:-1], s[1:])
        t2 = np.clip(t2, t1, s[1:])
        inner_t = np.column_stack([s[:-1], t1, t2]).ravel()
        inner_v = np.column_stack([va, hb, hb]).ravel()
        ts.append(inner_t)
        vs.append(inner_v)
    ts.append([s[-1]])
    vs.append([v[-1]])
    # right boundary piece
    if s[-1] < tau:
        yk = v[-1] - lip * (tau - s[-1])
        if yk >= floor:
            ts.append([tau])
            vs.append([yk])
        else:
            ts.append([s[-1] + (v[-1] - floor) / lip, tau])
            vs.append([floor, floor])
    t = np.concatenate([np.asarray(a, dtype=float) for a in ts])
    val = np.concatenate([np.asarray(a, dtype=float) for a in vs])
    t = np.clip(t, 0.0, tau)
    return _readonly(t), _readonly(val)


def tent_transform(knot_times, knot_values, lipschitz_L, tau, floor=0.0):
    """Smallest member of the Lipschitz cone through the given node values.

    Between neighbouring knots the result descends with slope ``-L``, is cut
    at ``floor`` and climbs back with slope ``+L``; outside the outer knots it
    follows the single line through the nearest node. Raises
    :class:`ConstraintError` when no ``L``-Lipschitz function can pass through
    the nodes.
    """
    knot_times = np.asarray(knot_times, dtype=float).reshape(-1)
    knot_values = np.asarray(knot_values, dtype=float).reshape(-1)
    if knot_times.size != knot_values.size or knot_times.size == 0:
        raise DataError("need the same nonzero number of times and values")
    if np.any(knot_values < 0):
        raise ConstraintError("node values must be nonnegative")
    return SplineHazard(tau=tau, lipschitz_L=lipschitz_L, knots=knot_times,
                        values=knot_values, mode="tent", floor=floor)


def linear_hazard(intercept, slope, tau, lipschitz_L=None):
    """``lambda(t) = intercept + slope * t`` as an interpolating spline."""
    lip = abs(slope) if lipschitz_L is None else lipschitz_L
    return SplineHazard(tau=tau, lipschitz_L=lip, knots=[0.0, tau],
                        values=[intercept, intercept + slope * tau],
                        mode="interp")


def constant_hazard(rate, tau, lipschitz_L=0.0):
    return linear_hazard(rate, 0.0, tau, lipschitz_L)


def eval_hazard(h, t):
    return h(t)


def cumulative_hazard(h, y):
    return h.cumulative(y)
