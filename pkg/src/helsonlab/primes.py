"""Shared prime sieve.

A single linear (smallest-prime-factor) sieve backs every module: it gives the
ordered prime list, the smallest prime factor of each n, and the position of
that factor in the prime list. The largest sieve built so far is cached and
sliced for smaller requests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numba
import numpy as np

from .config import check_memory
from .errors import DomainError


@numba.njit(cache=True)
def _linear_sieve(n):
    spf = np.zeros(n + 1, dtype=np.int32)
    spf_index = np.full(n + 1, -1, dtype=np.int32)
    primes = np.empty(max(16, int(1.3 * n / max(1.0, np.log(max(n, 2)))) + 16), dtype=np.int32)
    count = 0
    if n >= 1:
        spf[1] = 1
    for i in range(2, n + 1):
        if spf[i] == 0:
            spf[i] = i
            spf_index[i] = count
            primes[count] = i
            count += 1
        si = spf_index[i]
        for j in range(si + 1):
            p = primes[j]
            m = i * p
            if m > n:
                break
            spf[m] = p
            spf_index[m] = j
    return spf, spf_index, primes[:count].copy()


@numba.njit(cache=True)
def _largest_prime_factor(spf):
    n = spf.shape[0] - 1
    lpf = np.zeros(n + 1, dtype=np.int32)
    if n >= 1:
        lpf[1] = 1
    for i in range(2, n + 1):
        p = spf[i]
        c = lpf[i // p]
        lpf[i] = p if p > c else c
    return lpf


@dataclass(frozen=True)
class Sieve:
    """Immutable sieve arrays for 0..limit.

    ``spf[1] == 1`` and ``spf_index[1] == -1`` encode the empty factorization.
    """

    limit: int
    spf: np.ndarray
    spf_index: np.ndarray
    primes: np.ndarray

    def restrict(self, n: int) -> "Sieve":
        if n == self.limit:
            return self
        k = int(np.searchsorted(self.primes, n, side="right"))
        return Sieve(n, self.spf[: n + 1], self.spf_index[: n + 1], self.primes[:k])

    def largest_prime_factor(self) -> np.ndarray:
        return _largest_prime_factor(self.spf)

    def cofactor(self) -> np.ndarray:
        """n // spf(n) for n >= 1 (0 at n = 0 and n = 1)."""
        idx = np.arange(self.limit + 1, dtype=np.int64)
        out = np.zeros(self.limit + 1, dtype=np.int32)
        out[2:] = idx[2:] // self.spf[2:]
        return out


_cache: Sieve | None = None
_lock = threading.Lock()


def sieve(n: int) -> Sieve:
    """Sieve of all integers up to ``n`` (inclusive)."""
    global _cache
    n = int(n)
    if n < 1:
        raise DomainError(f"sieve limit must be >= 1, got {n}")
    with _lock:
        if _cache is not None and _cache.limit >= n:
            return _cache.restrict(n)
        check_memory(9.0 * (n + 1), f"prime sieve up to {n}")
        target = max(n, 1 << 16)
        spf, spf_index, primes = _linear_sieve(target)
        _cache = Sieve(target, spf, spf_index, primes)
        return _cache.restrict(n)


def primes_up_to(y: float) -> np.ndarray:
    y = int(np.floor(y))
    if y < 2:
        return np.empty(0, dtype=np.int32)
    return sieve(y).primes


def prime_count(y: float) -> int:
    return len(primes_up_to(y))


def is_prime(p: int) -> bool:
    p = int(p)
    if p < 2:
        return False
    if p <= (1 << 22):
        return int(sieve(p).spf[p]) == p
    if p % 2 == 0:
        return False
    d = 3
    while d * d <= p:
        if p % d == 0:
            return False
        d += 2
    return True


def prime_index(p: int) -> int:
    """Zero-based position of ``p`` in the ordered prime sequence."""
    p = int(p)
    if not is_prime(p):
        raise DomainError(f"{p} is not prime")
    s = sieve(p)
    return int(s.spf_index[p])


def factorize(n: int) -> dict[int, int]:
    """Prime factorization of ``n >= 1`` as {prime: exponent}."""
    n = int(n)
    if n < 1:
        raise DomainError(f"cannot factorize {n}")
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out
