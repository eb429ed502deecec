"""Exception hierarchy.

CLI exit codes map onto these: input/validation problems exit with 2,
numeric non-convergence with 3.
"""


class CorrcoxError(Exception):
    exit_code = 2


class DomainError(CorrcoxError, ValueError):
    """Argument outside the domain of a function (e.g. t outside [0, tau])."""


class ConstraintError(CorrcoxError, ValueError):
    """Values violate the Lipschitz cone / floor constraints."""


class UsageError(CorrcoxError, ValueError):
    """Inconsistent or missing inputs."""


class DataError(CorrcoxError, ValueError):
    """Malformed dataset or config file."""


class DegenerateDataError(CorrcoxError, ValueError):
    """The corrected objective is unbounded on this dataset."""


class ConditionError(CorrcoxError, ValueError):
    """A model condition on the simulation truth is violated."""

    def __init__(self, condition, message):
        self.condition = condition
        super().__init__(f"condition ({condition}): {message}")


class NumericError(CorrcoxError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericError):
    pass
