"""Counter-based phases for the Steinhaus random multiplicative function.

Each prime p gets an angle theta_p in [0, 2*pi) that is a pure function of a
64-bit key and the position of p in the prime sequence. Nothing is stored, so
a realization is defined on all primes at once, any subset can be queried in
any order, and the primes above a cutoff can be resampled while the ones below
stay frozen.

Keys are derived with the murmur3 finalizer; stream values come from the
SplitMix64 output function applied to ``key + (index + 1) * golden``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError
from .primes import is_prime, prime_count, prime_index

MASK64 = (1 << 64) - 1
TWO_PI = 2.0 * np.pi

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xFF51AFD7ED558CCD)
_M2 = np.uint64(0xC4CEB9FE1A85EC53)
_S1 = np.uint64(0xBF58476D1CE4E5B9)
_S2 = np.uint64(0x94D049BB133111EB)
_U33 = np.uint64(33)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

# tags keep the derived key families apart
TAG_BASE = 0
TAG_ROUGH = 0x526F756768  # "Rough"


@numba.njit(inline="always")
def _fmix64(k):
    k ^= k >> _U33
    k *= _M1
    k ^= k >> _U33
    k *= _M2
    k ^= k >> _U33
    return k


@numba.njit(inline="always")
def _splitmix_out(z):
    z = (z ^ (z >> _U30)) * _S1
    z = (z ^ (z >> _U27)) * _S2
    return z ^ (z >> _U31)


@numba.njit(cache=True, nogil=True)
def _derive(parent, tag):
    return _fmix64(parent ^ _fmix64(tag + _GOLDEN))


@numba.njit(cache=True, nogil=True)
def _uniform_matrix(keys, indices):
    out = np.empty((keys.shape[0], indices.shape[0]), dtype=np.float64)
    for r in range(keys.shape[0]):
        k = keys[r]
        for j in range(indices.shape[0]):
            z = _splitmix_out(k + (np.uint64(indices[j]) + _ONE) * _GOLDEN)
            out[r, j] = np.float64(z >> _U11) * _INV53
    return out


@numba.njit(cache=True, nogil=True)
def _derive_many(parent, tags):
    out = np.empty(tags.shape[0], dtype=np.uint64)
    for i in range(tags.shape[0]):
        out[i] = _derive(parent, tags[i])
    return out


def derive_key(parent: int, tag: int) -> int:
    return int(_derive(np.uint64(parent & MASK64), np.uint64(tag & MASK64)))


def derive_keys(parent: int, tags) -> np.ndarray:
    tags = np.asarray(tags, dtype=np.uint64)
    return _derive_many(np.uint64(parent & MASK64), tags)


def uniform_matrix(keys, indices) -> np.ndarray:
    """U[r, j] in [0, 1) for stream ``keys[r]`` at counter ``indices[j]``."""
    keys = np.ascontiguousarray(np.asarray(keys, dtype=np.uint64).reshape(-1))
    indices = np.ascontiguousarray(np.asarray(indices, dtype=np.int64).reshape(-1))
    return _uniform_matrix(keys, indices)


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value <= MASK64:
        raise DomainError(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


@dataclass(frozen=True)
class Seed:
    """(master, replica) pair; every pair names an independent stream."""

    master: int
    replica: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master", _check_u64("master", self.master))
        object.__setattr__(self, "replica", _check_u64("replica", self.replica))

    @property
    def key(self) -> int:
        root = int(_fmix64(np.uint64(self.master)))
        return derive_key(derive_key(root, self.replica), TAG_BASE)

    def __str__(self) -> str:
        return f"{self.master}:{self.replica}"


def replica_keys(master: int, replicas) -> np.ndarray:
    """Base stream keys for ``Seed(master, r)`` for each r in ``replicas``."""
    root = int(_fmix64(np.uint64(_check_u64("master", master))))
    return _derive_tag_vec(derive_keys(root, replicas), TAG_BASE)


@numba.njit(cache=True, nogil=True)
def _derive_tag_vec_kernel(parents, tag):
    out = np.empty(parents.shape[0], dtype=np.uint64)
    for i in range(parents.shape[0]):
        out[i] = _derive(parents[i], tag)
    return out


def _derive_tag_vec(parents: np.ndarray, tag: int) -> np.ndarray:
    return _derive_tag_vec_kernel(np.ascontiguousarray(parents, dtype=np.uint64), np.uint64(tag))


def phase_matrix(master: int, replicas, prime_indices) -> np.ndarray:
    """theta[r, j] for replica ``replicas[r]`` and prime number ``prime_indices[j]``."""
    return TWO_PI * uniform_matrix(replica_keys(master, replicas), prime_indices)


@dataclass(frozen=True)
class PhaseAssignment:
    """One realization of the Steinhaus phases.

    When ``rough`` is set to ``(y, key)``, primes above ``y`` draw their phases
    from ``key`` instead of the seed's own stream; primes up to ``y`` keep the
    values of the underlying seed.
    """

    seed: Seed
    rough: tuple[float, int] | None = field(default=None)

    @property
    def key(self) -> int:
        return self.seed.key

    def resample_rough(self, y: float, rough_replica: int) -> "PhaseAssignment":
        """Freeze primes <= y and redraw the rest from replica ``rough_replica``."""
        return PhaseAssignment(self.seed, (float(y), rough_key(self.seed, rough_replica)))

    def phases_by_index(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        theta = TWO_PI * uniform_matrix([self.key], indices)[0]
        if self.rough is not None:
            y, key = self.rough
            cut = prime_count(y)
            hi = indices >= cut
            if hi.any():
                theta[hi] = TWO_PI * uniform_matrix([key], indices[hi])[0]
        return theta

    def phases(self, primes) -> np.ndarray:
        """theta_p for an array of primes (not validated; use :func:`phase` for that)."""
        primes = np.asarray(primes, dtype=np.int64).reshape(-1)
        if primes.size == 0:
            return np.empty(0)
        from .primes import sieve

        idx = sieve(int(primes.max())).spf_index[primes]
        return self.phases_by_index(idx)


def rough_key(seed: Seed, rough_replica: int) -> int:
    return derive_key(derive_key(seed.key, TAG_ROUGH), _check_u64("rough_replica", rough_replica))


def rough_keys(seed: Seed, rough_replicas) -> np.ndarray:
    parent = derive_key(seed.key, TAG_ROUGH)
    return derive_keys(parent, rough_replicas)


def phase(assignment: PhaseAssignment, p: int) -> float:
    """theta_p in [0, 2*pi) for a prime ``p``."""
    if not is_prime(p):
        raise DomainError(f"phase is defined on primes only, got {p}")
    return float(assignment.phases_by_index([prime_index(p)])[0])


def alpha_at_prime(assignment: PhaseAssignment, p: int) -> complex:
    """alpha(p) = exp(i * theta_p)."""
    t = phase(assignment, p)
    return complex(np.cos(t), np.sin(t))


def normal_generator(master: int, *spawn_key: int) -> np.random.Generator:
    """Gaussian source for a fixed (master, block) address."""
    ss = np.random.SeedSequence(entropy=_check_u64("master", master), spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.PCG64(ss))
