"""Exact counts of y-smooth and y-rough integers, and the Rankin/Brun checks.

Psi(x, y) counts y-smooth n in [1, x], Phi(x, y) counts y-rough n in [1, x];
1 is both. Up to ``SIEVE_LIMIT`` the counts come straight from the shared
smallest-prime-factor sieve. Above it a segmented sieve is used: a log-sieve
for smooth numbers and a crossing-off sieve for rough ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .errors import DomainError
from .primes import primes_up_to, sieve

SIEVE_LIMIT = 20_000_000
COUNT_LIMIT = 1_000_000_000
SEGMENT = 1 << 18

EULER_GAMMA = 0.57721566490153286061

# max brun_ratio over x in {1e4, 1e5, 1e6}, H in {100, ..., 1e4}, y in {10, ..., 1000}
# is 0.7322; frozen with a little room
BRUN_ENVELOPE = 0.75


@numba.njit(cache=True, nogil=True)
def _segmented_smooth(x, primes, segment):
    # n is smooth iff the logs of its small prime powers add up to log n;
    # otherwise the missing factor exceeds y >= 2, a gap of at least log 2.
    count = 0
    logs = np.empty(segment, dtype=np.float64)
    lo = 1
    while lo <= x:
        hi = min(x, lo + segment - 1)
        m = hi - lo + 1
        logs[:m] = 0.0
        for j in range(primes.shape[0]):
            p = primes[j]
            lp = np.log(p)
            q = p
            while q <= hi:
                start = ((lo + q - 1) // q) * q
                for n in range(start, hi + 1, q):
                    logs[n - lo] += lp
                if q > hi // p:
                    break
                q *= p
        for i in range(m):
            if logs[i] > np.log(lo + i) - 0.3:
                count += 1
        lo = hi + 1
    return count


@numba.njit(cache=True, nogil=True)
def _interval_rough(a, b, primes, segment):
    """Number of y-rough n in (a, b], with ``primes`` the primes <= y."""
    count = 0
    hit = np.empty(segment, dtype=np.bool_)
    lo = a + 1
    while lo <= b:
        hi = min(b, lo + segment - 1)
        m = hi - lo + 1
        hit[:m] = False
        for j in range(primes.shape[0]):
            p = primes[j]
            start = ((lo + p - 1) // p) * p
            for n in range(start, hi + 1, p):
                hit[n - lo] = True
        for i in range(m):
            if not hit[i]:
                count += 1
        lo = hi + 1
    return count


@dataclass(frozen=True)
class CountTable:
    x: int
    y: float
    psi: int
    phi: int


def _check(x, y):
    x = int(math.floor(x))
    if x < 1:
        raise DomainError(f"x must be >= 1, got {x}")
    if y < 2:
        raise DomainError(f"y must be >= 2, got {y}")
    if x > COUNT_LIMIT:
        raise DomainError(f"x={x} above the counting cap {COUNT_LIMIT}")
    return x


def psi(x: float, y: float) -> int:
    x = _check(x, y)
    if y >= x:
        return x
    if x <= SIEVE_LIMIT:
        lpf = sieve(x).largest_prime_factor()
        return int(np.count_nonzero(lpf[1:] <= y))
    return int(_segmented_smooth(x, primes_up_to(y).astype(np.int64), SEGMENT))


def phi(x: float, y: float) -> int:
    x = _check(x, y)
    if y >= x:
        return 1
    if x <= SIEVE_LIMIT:
        spf = sieve(x).spf
        return int(np.count_nonzero(spf[2:] > y)) + 1
    return int(_interval_rough(0, x, primes_up_to(y).astype(np.int64), SEGMENT))


def count_smooth(x: float, y: float) -> CountTable:
    return CountTable(int(math.floor(x)), float(y), psi(x, y), phi(x, y))


count_rough = count_smooth


def psi_many(xs, y: float) -> np.ndarray:
    """Psi(x, y) for an array of x values (0 for x < 1)."""
    xs = np.asarray(xs, dtype=np.int64)
    if xs.size == 0:
        return np.zeros(0, dtype=np.int64)
    top = max(int(xs.max()), 2)
    lpf = sieve(top).largest_prime_factor()
    smooth = lpf <= y
    smooth[0] = False
    cum = np.cumsum(smooth)
    out = np.zeros(xs.shape, dtype=np.int64)
    ok = xs >= 1
    out[ok] = cum[xs[ok]]
    return out


def phi_interval(a: int, b: int, y: float) -> int:
    """Phi(b, y) - Phi(a, y), counted directly on (a, b]."""
    if b <= a:
        return 0
    return int(_interval_rough(int(a), int(b), primes_up_to(y).astype(np.int64), SEGMENT))


# -------------------------------------------------------------------- oracles


def psi_buchstab(x: float, y: float) -> int:
    """Psi(x, y) via Psi(x, p_k) = Psi(x, p_{k-1}) + Psi(x / p_k, p_k)."""
    ps = [int(p) for p in primes_up_to(y)]

    @lru_cache(maxsize=None)
    def rec(n: int, k: int) -> int:
        if n < 1:
            return 0
        if k < 0:
            return 1
        if ps[k] >= n:
            return n
        # unrolled over k so the recursion depth is only log n
        return n.bit_length() + sum(rec(n // ps[j], j) for j in range(1, k + 1))

    return rec(int(math.floor(x)), len(ps) - 1)


def phi_legendre(x: float, y: float) -> int:
    """Phi(x, y) by inclusion-exclusion over squarefree products of primes <= y."""
    x = int(math.floor(x))
    ps = [int(p) for p in primes_up_to(y)]
    total = 0

    def walk(start: int, d: int, sign: int):
        nonlocal total
        total += sign * (x // d)
        for i in range(start, len(ps)):
            nd = d * ps[i]
            if nd > x:
                break
            walk(i + 1, nd, -sign)

    walk(0, 1, 1)
    return total


# -------------------------------------------------------------- Rankin / Brun


@dataclass(frozen=True)
class RankinCertificate:
    x: float
    y: float
    alpha: float
    bound: float
    psi: int

    @property
    def slack(self) -> float:
        return self.bound - self.psi


def rankin_bound(x: float, y: float, alpha: float) -> float:
    """x^alpha * prod_{p <= y} (1 - p^{-alpha})^{-1}."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    ps = primes_up_to(y).astype(np.float64)
    log_bound = alpha * math.log(x) - float(np.sum(np.log1p(-(ps ** -alpha))))
    return math.exp(log_bound)


def rankin_certificate(x: float, y: float, alpha: float) -> RankinCertificate:
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    return RankinCertificate(float(x), float(y), float(alpha), rankin_bound(x, y, alpha), psi(x, y))


def brun_ratio(x: int, H: int, y: float) -> float:
    """(Phi(x + H, y) - Phi(x, y)) * min(log y, log H) / H."""
    if H < 2 or y < 2 or x < 0:
        raise DomainError("need H >= 2, y >= 2 and x >= 0")
    return phi_interval(x, x + H, y) * min(math.log(y), math.log(H)) / H


def brun_envelope(xs, Hs, ys) -> float:
    return max(brun_ratio(int(x), int(H), y) for x in xs for H in Hs for y in ys)


# ---------------------------------------------------------- Mertens diagnostics


def mertens_sum(y: float) -> float:
    return float(np.sum(1.0 / primes_up_to(y).astype(np.float64)))


@lru_cache(maxsize=None)
def meissel_mertens_constant(limit: int = 10_000_000) -> float:
    """gamma + sum_p (log(1 - 1/p) + 1/p), summed directly over p <= limit.

    The neglected tail is below sum_{n > limit} 1/(2 n^2 (1 - 1/n)) < 1/limit.
    """
    ps = primes_up_to(limit).astype(np.float64)
    return EULER_GAMMA + float(np.sum(np.log1p(-1.0 / ps) + 1.0 / ps))


def mertens_gap(y: float) -> float:
    """sum_{p <= y} 1/p - (log log y + M)."""
    return mertens_sum(y) - (math.log(math.log(y)) + meissel_mertens_constant())
