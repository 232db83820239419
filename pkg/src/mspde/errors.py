"""Exception hierarchy shared across the package.

Configuration / usage mistakes map to CLI exit code 2, numerical
failures to exit code 3.
"""


class MspdeError(Exception):
    """Base class for all package errors."""


class ParameterError(MspdeError, ValueError):
    """An argument violates a documented precondition."""


class GeometryError(ParameterError):
    """Patch / grid / interface bookkeeping is inconsistent."""


class ConfigError(ParameterError):
    """Invalid experiment configuration; carries the offending field name."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class NumericalError(MspdeError, RuntimeError):
    """A numerical operation failed (singular system, non-convergence)."""


class SvdConvergenceError(NumericalError):
    """SVD iteration did not converge within the iteration cap."""

    def __init__(self, message, iteration_cap):
        super().__init__(f"{message} (iteration cap {iteration_cap})")
        self.iteration_cap = iteration_cap


class RankDeficiencyError(NumericalError):
    """A least-squares matrix is numerically rank deficient.

    ``numerical_rank`` holds the detected rank; ``columns`` optionally
    names offending columns (populated by the global solver with
    (patch, basis index) tags).
    """

    def __init__(self, message, numerical_rank, columns=None):
        super().__init__(message)
        self.numerical_rank = numerical_rank
        self.columns = columns or []
