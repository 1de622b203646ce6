"""Exception types shared across the package."""


class PatreeError(Exception):
    """Base class for all package errors."""


class DomainError(PatreeError, ValueError):
    """Argument outside the documented domain (parameter box, k >= 1, ...)."""


class IntegrityError(PatreeError):
    """Data structure violates an internal consistency rule."""


class ConvergenceError(PatreeError):
    """Iterative routine failed to converge; carries the best iterate if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InsufficientDataError(PatreeError):
    """Snapshot lacks the degree counts a routine needs."""


class UndefinedRatioError(PatreeError):
    """Empirical ratio r_k requested at a degree with zero count."""


class TruncationError(PatreeError):
    """A series tail could not be certified below the requested tolerance."""


class DegeneracyError(PatreeError):
    """A matrix or variance that must be positive (definite) is not."""


class NumericError(PatreeError):
    """An underlying numerical routine (eigen, quadrature) failed."""


class ProcedureError(PatreeError):
    """A multi-replicate procedure lost too many replicates to be trusted."""


class AbsorbingStateError(PatreeError):
    """Urn chain reached a state with total activity zero."""
