"""Hoeffding bounds and the Dudley entropy integral for the G_{y,2} increments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

METRIC_SCALE = 2.0 * math.sqrt(2.0)


def hoeffding_bound(c, lam: float | None = None, u: float | None = None) -> float:
    """exp(lam^2 sum c_i^2 / 2) for the mgf, or 2 exp(-u^2 / (2 sum c_i^2)) for the tail.

    Exactly one of ``lam`` and ``u`` must be given.
    """
    c = np.asarray(c, dtype=np.float64)
    if np.any(c < 0):
        raise DomainError("bounds c_i must be nonnegative")
    if (lam is None) == (u is None):
        raise DomainError("give exactly one of lam and u")
    v = float(np.sum(c * c))
    if lam is not None:
        return math.exp(0.5 * lam * lam * v)
    if u < 0:
        raise DomainError("u must be nonnegative")
    if v == 0:
        return 0.0 if u > 0 else 2.0
    return 2.0 * math.exp(-u * u / (2.0 * v))


def cover_number(length: float, r: float) -> int:
    """Upper bound 1 + floor(2 sqrt(2) |T| / r) on N(T, d, r) for d(s, t) = 2 sqrt(2) |s - t|."""
    if r <= 0:
        raise DomainError("radius must be positive")
    return 1 + int(math.floor(METRIC_SCALE * length / r))


@lru_cache(maxsize=None)
def _entropy_series(terms: int) -> float:
    # int_0^1 sqrt(log(1 + floor(1/u))) du: floor(1/u) = k on (1/(k+1), 1/k]
    k = np.arange(1, terms + 1, dtype=np.float64)
    head = float(np.sum(np.sqrt(np.log1p(k)) / (k * (k + 1.0))))
    # sqrt(log(1+k))/(k(k+1)) <= sqrt(log(1+x))/x^2 on [k-1, k] for large k
    K = float(terms)
    tail = math.sqrt(math.log1p(K)) / K * (1.0 + 1.0 / (2.0 * math.log1p(K)))
    return head + tail


def dudley_constant(terms: int = 10_000_000) -> float:
    """int_0^1 sqrt(log(1 + floor(1/u))) du."""
    return _entropy_series(terms)


def dudley_integral(length: float, terms: int = 10_000_000) -> float:
    """int_0^inf sqrt(log N(T, d, r)) dr with the cover bound above; no C_2 factor.

    The integrand is a step function of r with jumps at r = 2 sqrt(2) |T| / k,
    so the integral is summed piece by piece in r.
    """
    if length <= 0:
        raise DomainError("interval length must be positive")
    c = METRIC_SCALE * length
    k = np.arange(1, terms + 1, dtype=np.float64)
    widths = c / k - c / (k + 1.0)
    head = float(np.sum(np.sqrt(np.log1p(k)) * widths))
    K = float(terms)
    tail = c * math.sqrt(math.log1p(K)) / K * (1.0 + 1.0 / (2.0 * math.log1p(K)))
    return head + tail


@dataclass(frozen=True)
class ChainingBudget:
    interval_length: float
    metric_scale: float
    dudley: float

    def cover_number(self, r: float) -> int:
        return cover_number(self.interval_length, r)

    @property
    def gamma2_upper(self) -> float:
        """Dudley value; the true gamma_2 is below it up to the universal C_2."""
        return self.dudley


def chaining_budget(length: float) -> ChainingBudget:
    return ChainingBudget(float(length), METRIC_SCALE, dudley_integral(length))
