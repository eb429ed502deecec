"""Hazards, measurement-error laws, data and the corrected objective."""

from .data import Dataset, ParamBox
from .hazard import (SplineHazard, constant_hazard, cumulative_hazard,
                     eval_hazard, linear_hazard, tent_transform)
from .measurement import ErrorModel, mgf, mgf_moment
from .objective import (NEG_INF, corrected_objective, corrected_term,
                        corrected_terms, correction_weights)

__all__ = [
    "Dataset", "ParamBox", "SplineHazard", "ErrorModel", "NEG_INF",
    "constant_hazard", "linear_hazard", "tent_transform", "eval_hazard",
    "cumulative_hazard", "mgf", "mgf_moment", "corrected_term",
    "corrected_terms", "corrected_objective", "correction_weights",
]
