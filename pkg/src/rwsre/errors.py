"""Exception types shared across the package."""


class RwsreError(Exception):
    """Base class for all package-specific errors."""


class SpecValidationError(RwsreError, ValueError):
    """A distribution or environment specification is malformed."""


class OutOfSpanError(RwsreError, LookupError):
    """A site outside the realized environment span was addressed."""


class BudgetExceededError(RwsreError, RuntimeError):
    """A trajectory exhausted its step budget before reaching the target.

    Carries the partial outcome (if any) on the ``partial`` attribute so the
    caller can inspect how far the walk got.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class PopulationOverflowError(RwsreError, OverflowError):
    """A branching population left the safe 64-bit range (beyond 2**62)."""


class SeriesDivergenceError(RwsreError, RuntimeError):
    """A truncated series failed to meet its tolerance within max_terms."""


class UnsupportedFamilyError(RwsreError, TypeError):
    """The requested computation is undefined for this distribution family."""


class RegimeMismatchError(RwsreError, RuntimeError):
    """An experiment was invoked with a spec outside its required regime."""


class EstimatorError(RwsreError, ValueError):
    """Invalid input to a statistical estimator."""
