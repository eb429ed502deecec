"""The measurement-error-corrected log-likelihood contribution and its mean.

Values are floats in the extended reals ``[-inf, inf)``: an event observed
where the hazard vanishes contributes ``-inf``, which is absorbing under
addition and ranks below every finite value, so optimizers can still compare
candidates.
"""

import numpy as np

from ..errors import UsageError

NEG_INF = float("-inf")


def _log_term(delta, rate):
    # 0 * log 0 = 0 for censored records, log 0 = -inf for events
    with np.errstate(divide="ignore"):
        logs = np.log(rate)
    return np.where(delta == 1, logs, 0.0)


def correction_weights(w, beta, error_model):
    """``exp(beta' W) / M_U(beta)`` for each row of ``w``."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    return np.exp(np.atleast_2d(w) @ beta) / error_model.mgf(beta)


def corrected_term(y, delta, w, hazard, beta, error_model):
    """Single-record contribution
    ``Delta*(log lambda(Y) + beta'W) - exp(beta'W)/M_U(beta) * Lambda(Y)``."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    lam = hazard(y)
    if delta == 1 and lam <= 0.0:
        return NEG_INF
    c = float(np.exp(w @ beta)) / error_model.mgf(beta)
    out = -c * hazard.cumulative(y)
    if delta == 1:
        out += np.log(lam) + float(w @ beta)
    return float(out)


def corrected_terms(data, hazard, beta, error_model):
    beta = np.asarray(beta, dtype=float).reshape(-1)
    lam = hazard(data.y)
    c = correction_weights(data.w, beta, error_model)
    return (_log_term(data.delta, lam) + data.delta * (data.w @ beta)
            - c * hazard.cumulative(data.y))


def corrected_objective(data, hazard, beta, error_model):
    """Mean corrected contribution over the sample (``-inf`` is absorbing)."""
    if data.n == 0:
        raise UsageError("corrected objective of an empty dataset")
    if data.m != error_model.dim or np.size(beta) != data.m:
        raise UsageError("dimension mismatch between data, beta and error model")
    terms = corrected_terms(data, hazard, beta, error_model)
    if np.any(terms == NEG_INF):
        return NEG_INF
    return float(np.mean(terms))
