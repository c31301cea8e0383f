"""Exception types shared across the solvers."""


class SolverError(Exception):
    """Base class for solver failures."""


class DimensionMismatchError(ValueError):
    """Operands live in spaces of different dimension."""


class NonsmoothnessError(SolverError):
    """Line search exceeded its curvature ceiling.

    The objective most likely violates the Lipschitz-gradient assumption.
    """


class BudgetExhaustedError(SolverError):
    """Iteration cap reached before the stopping rule triggered."""


class OracleOverflowError(SolverError):
    """An exponential oracle overflowed despite log-domain stabilization."""


class ScalingUnderflowError(SolverError):
    """Diagonal scaling hit a zero or non-finite denominator.

    Usually means direct-mode matrix scaling at too small a regularization;
    switch to log-domain mode or increase gamma.
    """


class UnsupportedConfigurationError(SolverError):
    """The requested combination of options is not supported."""
