"""Exception hierarchy shared by all modules.

Each class carries the process exit code used by the command-line front end.
"""


class TeichLDError(Exception):
    exit_code = 1


class ValidationError(TeichLDError, ValueError):
    """Malformed input: bad permutation, wrong table arity, unknown config key."""

    exit_code = 2


class ConvergenceError(TeichLDError, ArithmeticError):
    """An iterative computation stopped before reaching its tolerance."""

    exit_code = 3

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BudgetError(TeichLDError):
    """A configured size or enumeration budget would be exceeded."""

    exit_code = 4


class NonInducibleError(TeichLDError, ValueError):
    """Zippered rectangle on the boundary lambda_{pi^-1 m} == lambda_m."""

    exit_code = 2


class MetricUndefinedError(TeichLDError, ValueError):
    """A coordinate ratio in the zippered-rectangle metric has a zero denominator."""

    exit_code = 2
