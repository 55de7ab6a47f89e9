"""Monte Carlo and exact-arithmetic experiments on Steinhaus random multiplicative functions."""

from .errors import DomainError, FactorizationError, PreconditionError, ResourceError, TruncationWarning
from .rng import PhaseAssignment, Seed

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "FactorizationError",
    "PhaseAssignment",
    "PreconditionError",
    "ResourceError",
    "Seed",
    "TruncationWarning",
]
