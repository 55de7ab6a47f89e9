"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """A documented precondition on the inputs does not hold."""


class ResourceError(MemoryError):
    """The requested computation would exceed the configured memory cap."""


class FactorizationError(ValueError):
    """A covariance kernel could not be factorized (not positive semidefinite)."""


class TruncationWarning(RuntimeWarning):
    """A quadrature tail criterion was not met within the configured budget."""
