"""Exception hierarchy shared across the package."""


class GfracError(Exception):
    """Base class for all package errors."""


class DomainError(GfracError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(GfracError, ValueError):
    """Array lengths or grid shapes do not match."""


class InversionError(GfracError, ArithmeticError):
    """Numerical Laplace inversion produced non-finite values."""


class AccuracyError(GfracError, ArithmeticError):
    """An iterative evaluation failed to reach its accuracy target.

    Attributes
    ----------
    estimate : float
        The error estimate that was actually achieved.
    """

    def __init__(self, message, estimate=float("nan")):
        super().__init__(message)
        self.estimate = estimate


class SamplingError(GfracError, RuntimeError):
    """A density is too degenerate to sample from."""
