"""Two-stage corrected estimator for the Cox model when covariates carry
additive measurement error of known law."""

__version__ = "0.1.0"

from .asymptotics import (AsymptoticTables, FredholmSolution, build_tables,
                          matrix_A, matrix_M, moment_grids, sandwich,
                          sigma_beta, solve_fredholm)
from .core import (Dataset, ErrorModel, ParamBox, SplineHazard,
                   corrected_objective, corrected_term, tent_transform)
from .errors import (ConditionError, ConvergenceError, CorrcoxError,
                     DataError, NumericError, UsageError)
from .estimator import (Estimate, FitConfig, brute_force_fit, fit,
                        fit_stage1, fit_stage2, profile_hazard)
from .simulation import (StudyConfig, StudyReport, run_consistency_study,
                         run_normality_study, sample_dataset)
from .truth import CensorLaw, CovariateLaw, Truth, default_truth

__all__ = [
    "AsymptoticTables", "FredholmSolution", "build_tables", "matrix_A",
    "matrix_M", "moment_grids", "sandwich", "sigma_beta", "solve_fredholm",
    "Dataset", "ErrorModel", "ParamBox", "SplineHazard", "corrected_objective",
    "corrected_term", "tent_transform", "ConditionError", "ConvergenceError",
    "CorrcoxError", "DataError", "NumericError", "UsageError", "Estimate",
    "FitConfig", "brute_force_fit", "fit", "fit_stage1", "fit_stage2",
    "profile_hazard", "StudyConfig", "StudyReport", "run_consistency_study",
    "run_normality_study", "sample_dataset", "CensorLaw", "CovariateLaw",
    "Truth", "default_truth",
]
