"""Tables of alpha(n), partial sums S_x and S_{x,y}, and exact identity checks.

alpha(n) is built along the smallest-prime-factor chain of the shared sieve:
``phase(n) = phase(n // spf(n)) + theta_{spf(n)}``, so complete
multiplicativity holds by construction. Batched Monte Carlo over many
replicas uses the complex recurrence ``alpha(n) = alpha(n // spf(n)) *
alpha(spf(n))`` instead, which avoids a sine/cosine per integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import rng
from .config import check_memory
from .errors import DomainError, PreconditionError
from .primes import factorize, prime_count, sieve
from .rng import PhaseAssignment, Seed

_BLOCK = 1024


@numba.njit(cache=True, nogil=True)
def _phase_table(spf_index, cofactor, theta):
    n = spf_index.shape[0] - 1
    ph = np.zeros(n + 1, dtype=np.float64)
    for i in range(2, n + 1):
        ph[i] = ph[cofactor[i]] + theta[spf_index[i]]
    return ph


@numba.njit(cache=True, nogil=True)
def _batch_prefix(alpha_p, spf_index, cofactor, checkpoints):
    """Prefix sums of alpha(n) at ``checkpoints`` for each row of ``alpha_p``."""
    n = spf_index.shape[0] - 1
    reps = alpha_p.shape[0]
    out = np.zeros((reps, checkpoints.shape[0]), dtype=np.complex128)
    buf = np.empty(n + 1, dtype=np.complex128)
    for r in range(reps):
        buf[1] = 1.0
        s = 1.0 + 0.0j
        k = 0
        while k < checkpoints.shape[0] and checkpoints[k] < 1:
            k += 1
        while k < checkpoints.shape[0] and checkpoints[k] == 1:
            out[r, k] = s
            k += 1
        for i in range(2, n + 1):
            v = buf[cofactor[i]] * alpha_p[r, spf_index[i]]
            buf[i] = v
            s += v
            while k < checkpoints.shape[0] and checkpoints[k] == i:
                out[r, k] = s
                k += 1
    return out


def blocked_cumsum(v: np.ndarray) -> np.ndarray:
    """Cumulative sum with two-level blocking (error grows like block + n/block)."""
    v = np.asarray(v)
    n = v.shape[0]
    if n <= _BLOCK:
        return np.cumsum(v)
    nb = -(-n // _BLOCK)
    pad = np.zeros(nb * _BLOCK, dtype=v.dtype)
    pad[:n] = v
    blocks = pad.reshape(nb, _BLOCK)
    inner = np.cumsum(blocks, axis=1)
    offsets = np.zeros(nb, dtype=v.dtype)
    offsets[1:] = np.cumsum(inner[:-1, -1])
    return (inner + offsets[:, None]).reshape(-1)[:n]


@dataclass(frozen=True)
class MultiplicativeTable:
    """alpha(n) for 0 <= n <= N (index 0 is an unused zero).

    ``prefix[n]`` is sum_{k <= n} alpha(k); ``phases[n]`` is the unreduced
    angle of alpha(n).
    """

    N: int
    assignment: PhaseAssignment
    phases: np.ndarray
    values: np.ndarray
    spf: np.ndarray
    prefix: np.ndarray

    def alpha(self, n: int) -> complex:
        if not 1 <= n <= self.N:
            raise DomainError(f"n={n} outside 1..{self.N}")
        return complex(self.values[n])


def table_bytes(N: int) -> int:
    return 53 * (N + 1)


def build_table(assignment: PhaseAssignment, N: int) -> MultiplicativeTable:
    N = int(N)
    if N < 1:
        raise DomainError(f"table size must be >= 1, got {N}")
    check_memory(table_bytes(N), f"multiplicative table up to {N}")
    sv = sieve(N)
    theta = assignment.phases_by_index(np.arange(len(sv.primes)))
    ph = _phase_table(sv.spf_index, sv.cofactor(), theta)
    values = np.exp(1j * ph)
    values[0] = 0.0
    prefix = blocked_cumsum(values)
    return MultiplicativeTable(N, assignment, ph, values, sv.spf, prefix)


@dataclass(frozen=True)
class SmoothMask:
    """y-smooth indicator over 0..N (1 is smooth, 0 is not)."""

    y: float
    mask: np.ndarray

    @property
    def N(self) -> int:
        return self.mask.shape[0] - 1


def smooth_mask(N: int, y: float) -> SmoothMask:
    lpf = sieve(N).largest_prime_factor()
    mask = lpf <= y
    mask[0] = False
    return SmoothMask(float(y), mask)


def rough_mask(N: int, y: float) -> np.ndarray:
    """y-rough indicator over 0..N; 1 counts as rough."""
    spf = sieve(N).spf
    mask = spf > y
    mask[0] = False
    if N >= 1:
        mask[1] = True
    return mask


@dataclass(frozen=True)
class SumRecord:
    x: float
    y: float | None
    value: complex

    @property
    def normalization(self) -> float:
        return 1.0 / math.sqrt(self.x)

    @property
    def raw(self) -> complex:
        """sum_{n <= x} alpha(n) without the 1/sqrt(x) factor."""
        return self.value * math.sqrt(self.x)


def partial_sum(table: MultiplicativeTable, x: float, mask: SmoothMask | None = None) -> SumRecord:
    """S_x, or S_{x,y} when a smoothness mask is given."""
    x = float(x)
    if x > table.N:
        raise DomainError(f"x={x} exceeds table size {table.N}")
    if x <= 0:
        raise DomainError(f"x must be positive, got {x}")
    k = int(math.floor(x))
    if mask is None:
        raw = complex(table.prefix[k])
        return SumRecord(x, None, raw / math.sqrt(x))
    if mask.N < k:
        raise DomainError(f"mask covers 1..{mask.N}, need {k}")
    raw = complex(np.sum(table.values[1 : k + 1][mask.mask[1 : k + 1]]))
    return SumRecord(x, mask.y, raw / math.sqrt(x))


def masked_prefix(table: MultiplicativeTable, mask: np.ndarray) -> np.ndarray:
    """Cumulative sums of alpha(n) over the masked n (same indexing as the table)."""
    return blocked_cumsum(np.where(mask[: table.N + 1], table.values, 0.0))


def smooth_sum_at(prefix_y: np.ndarray, t) -> np.ndarray:
    """S_{t,y} for real t >= 0 from the masked prefix; depends on floor(t) only."""
    t = np.asarray(t, dtype=np.float64)
    k = np.floor(t).astype(np.int64)
    out = np.zeros(t.shape, dtype=np.complex128)
    ok = k >= 1
    out[ok] = prefix_y[k[ok]] / np.sqrt(t[ok])
    return out


# ---------------------------------------------------------------- statistics


@dataclass(frozen=True)
class ComplexEstimate:
    """Monte Carlo mean of a complex quantity."""

    mean: complex
    stderr: float
    replicas: int

    def within(self, target: complex, k: float = 4.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr + 1e-15

    def to_record(self, op: str, params: dict, seed) -> dict:
        return {
            "op": op,
            "params": params,
            "seed": str(seed),
            "estimate": {"re": self.mean.real, "im": self.mean.imag},
            "stderr": self.stderr,
            "replicas": self.replicas,
        }


def _complex_estimate(total: complex, total_sq: float, n: int) -> ComplexEstimate:
    mean = total / n
    var = max(total_sq / n - abs(mean) ** 2, 0.0) * n / max(n - 1, 1)
    return ComplexEstimate(complex(mean), math.sqrt(var / n), n)


def _exponent_difference(n: int, m: int) -> dict[int, int]:
    e = dict(factorize(n))
    for p, k in factorize(m).items():
        e[p] = e.get(p, 0) - k
    return {p: k for p, k in e.items() if k != 0}


def _indices_and_exponents(exps: dict[int, int]):
    ps = sorted(exps)
    if not ps:
        return np.empty(0, np.int64), np.empty(0)
    sv = sieve(max(ps))
    return sv.spf_index[np.array(ps)].astype(np.int64), np.array([exps[p] for p in ps], dtype=np.float64)


def _mean_unit_phase(keys_chunks, idx, ex, n_total) -> ComplexEstimate:
    if idx.size == 0:
        return ComplexEstimate(1.0 + 0.0j, 0.0, n_total)
    tot = 0.0 + 0.0j
    tot2 = 0.0
    for keys in keys_chunks:
        theta = rng.TWO_PI * rng.uniform_matrix(keys, idx)
        z = np.exp(1j * (theta @ ex))
        tot += complex(np.sum(z))
        tot2 += float(np.sum(np.abs(z) ** 2))
    return _complex_estimate(tot, tot2, n_total)


def _chunks(count: int, size: int = 65536):
    for lo in range(0, count, size):
        yield np.arange(lo, min(count, lo + size), dtype=np.uint64)


def check_orthogonality(n: int, m: int, replicas: int, seed: int) -> ComplexEstimate:
    """Monte Carlo estimate of E[alpha(n) conj(alpha(m))] over replicas of ``seed``."""
    if n < 1 or m < 1:
        raise DomainError("n and m must be positive integers")
    idx, ex = _indices_and_exponents(_exponent_difference(n, m))
    keys = (rng.replica_keys(seed, r) for r in _chunks(replicas))
    return _mean_unit_phase(keys, idx, ex, replicas)


def is_rough(n: int, y: float) -> bool:
    return all(p > y for p in factorize(n))


def check_conditional_orthogonality(n: int, m: int, y: float, smooth_seed: Seed, rough_replicas: int) -> ComplexEstimate:
    """E[alpha(n) conj(alpha(m)) | F_y]: primes <= y frozen at ``smooth_seed``."""
    if not (is_rough(n, y) and is_rough(m, y)):
        raise PreconditionError(f"{n} and {m} must both be {y}-rough")
    exps = _exponent_difference(n, m)
    idx, ex = _indices_and_exponents(exps)
    if idx.size == 0:
        return ComplexEstimate(1.0 + 0.0j, 0.0, rough_replicas)
    cut = prime_count(y)
    lo = idx < cut
    frozen = float(PhaseAssignment(smooth_seed).phases_by_index(idx[lo]) @ ex[lo]) if lo.any() else 0.0
    tot = 0.0 + 0.0j
    tot2 = 0.0
    for chunk in _chunks(rough_replicas):
        keys = rng.rough_keys(smooth_seed, chunk)
        theta = rng.TWO_PI * rng.uniform_matrix(keys, idx[~lo])
        z = np.exp(1j * (frozen + theta @ ex[~lo]))
        tot += complex(np.sum(z))
        tot2 += float(np.sum(np.abs(z) ** 2))
    return _complex_estimate(tot, tot2, rough_replicas)


# ------------------------------------------------------------ exact identities


@dataclass(frozen=True)
class SplittingResidual:
    residual: float
    terms: int
    lhs: complex
    rhs: complex


def check_splitting_identity(table: MultiplicativeTable, x: float, y: float) -> SplittingResidual:
    """|S_x - sum_{m <= x, m y-rough} alpha(m) m^{-1/2} S_{x/m,y}| for one sample."""
    if x > table.N:
        raise DomainError(f"x={x} exceeds table size {table.N}")
    if y < 2:
        raise DomainError("y must be >= 2")
    k = int(math.floor(x))
    prefix_y = masked_prefix(table, smooth_mask(table.N, y).mask)
    ms = np.nonzero(rough_mask(k, y))[0]
    inner = smooth_sum_at(prefix_y, x / ms)
    rhs = complex(np.sum(table.values[ms] / np.sqrt(ms) * inner))
    lhs = partial_sum(table, x).value
    return SplittingResidual(abs(lhs - rhs), int(ms.size), lhs, rhs)


def conditional_second_moment_rhs(table: MultiplicativeTable, x: float, y: float) -> float:
    """|S_{x,y}|^2 + sum_{y < m <= x, m y-rough} |S_{x/m,y}|^2 / m from the smooth phases."""
    k = int(math.floor(x))
    prefix_y = masked_prefix(table, smooth_mask(table.N, y).mask)
    rm = rough_mask(k, y)
    ms = np.nonzero(rm)[0]
    ms = ms[ms > y]
    head = abs(smooth_sum_at(prefix_y, np.array([x]))[0]) ** 2
    return float(head + np.sum(np.abs(smooth_sum_at(prefix_y, x / ms)) ** 2 / ms))


@dataclass(frozen=True)
class ConditionalMoment:
    lhs: float
    lhs_stderr: float
    rhs: float
    replicas: int

    @property
    def relative_error(self) -> float:
        return abs(self.lhs - self.rhs) / self.rhs if self.rhs else abs(self.lhs)

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.relative_error))


def check_conditional_second_moment(x: float, y: float, smooth_seed: Seed, rough_replicas: int,
                                    chunk: int = 4096) -> ConditionalMoment:
    """Nested Monte Carlo for E[|S_x|^2 | F_y] against its exact expression.

    The left side sums alpha(n) over all n <= x directly for each rough
    replica; it never goes through the smooth/rough factorization.
    """
    k = int(math.floor(x))
    if k < 1 or y < 2:
        raise DomainError("need x >= 1 and y >= 2")
    table = build_table(PhaseAssignment(smooth_seed), max(k, 2))
    rhs = conditional_second_moment_rhs(table, x, y)
    sv = sieve(max(k, 2))
    P = len(sv.primes)
    cut = min(prime_count(y), P)
    frozen = table.assignment.phases_by_index(np.arange(cut))
    cof = sv.cofactor()
    checkpoints = np.array([k], dtype=np.int64)
    vals = np.empty(rough_replicas)
    for lo in range(0, rough_replicas, chunk):
        r = np.arange(lo, min(rough_replicas, lo + chunk), dtype=np.uint64)
        theta = np.empty((r.size, P))
        theta[:, :cut] = frozen
        if P > cut:
            theta[:, cut:] = rng.TWO_PI * rng.uniform_matrix(rng.rough_keys(smooth_seed, r), np.arange(cut, P))
        sums = _batch_prefix(np.exp(1j * theta), sv.spf_index, cof, checkpoints)[:, 0]
        vals[lo : lo + r.size] = np.abs(sums) ** 2 / x
    lhs = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(rough_replicas)) if rough_replicas > 1 else 0.0
    return ConditionalMoment(lhs, se, rhs, rough_replicas)


@dataclass(frozen=True)
class SecondMomentSplit:
    """Per-sample pieces of E[|S_x|^2 | F_y] split at m = T."""

    x: float
    y: float
    T: float
    smooth_term: float
    t1: float
    t2: float
    t2_envelope: float

    @property
    def total(self) -> float:
        return self.smooth_term + self.t1 + self.t2


def second_moment_split(table: MultiplicativeTable, x: float, y: float, T: float) -> SecondMomentSplit:
    """|S_{x,y}|^2, T1 (y < m <= T) and T2 (T < m <= x) for one sample.

    ``t2_envelope`` is the grouped bound
    sum_{1 <= r < x/T} |S_{r,y}|^2 (Phi(x/r, y) - Phi(x/(r+1), y)) / (x/r),
    which dominates T2 up to the factor relating S_{x/m,y} and S_{r,y}.
    """
    k = int(math.floor(x))
    prefix_y = masked_prefix(table, smooth_mask(table.N, y).mask)
    rm = rough_mask(k, y)
    ms = np.nonzero(rm)[0]
    ms = ms[ms > y]
    contrib = np.abs(smooth_sum_at(prefix_y, x / ms)) ** 2 / ms
    t1 = float(np.sum(contrib[ms <= T]))
    t2 = float(np.sum(contrib[ms > T]))
    head = abs(smooth_sum_at(prefix_y, np.array([x]))[0]) ** 2
    phi = np.cumsum(rm)
    env = 0.0
    r = 1
    while r < x / T:
        hi = phi[int(math.floor(x / r))]
        lo = phi[int(math.floor(x / (r + 1)))]
        env += abs(smooth_sum_at(prefix_y, np.array([float(r)]))[0]) ** 2 * (hi - lo) / (x / r)
        r += 1
    return SecondMomentSplit(float(x), float(y), float(T), float(head), t1, t2, float(env))


def expected_t1(x: float, y: float, T: float) -> float:
    """E[T1] = x^{-1} sum_{y < m <= T, m y-rough} Psi(x/m, y), exactly."""
    from .counting import psi_many

    rm = rough_mask(int(math.floor(T)), y)
    ms = np.nonzero(rm)[0]
    ms = ms[ms > y]
    return float(np.sum(psi_many(np.floor(x / ms).astype(np.int64), y)) / x)


# ---------------------------------------------------------------- batched sums


def batch_partial_sums(master: int, replicas, xs, chunk: int = 64) -> np.ndarray:
    """Raw sums sum_{n <= x} alpha(n) for Seed(master, r), one row per replica.

    Rows depend only on (master, replica); chunking does not change any value.
    """
    xs = np.asarray(xs, dtype=np.int64)
    order = np.argsort(xs, kind="stable")
    N = int(xs.max())
    sv = sieve(max(N, 2))
    cof = sv.cofactor()
    P = len(sv.primes)
    replicas = np.asarray(replicas, dtype=np.uint64)
    out = np.empty((replicas.size, xs.size), dtype=np.complex128)
    pidx = np.arange(P)
    for lo in range(0, replicas.size, chunk):
        r = replicas[lo : lo + chunk]
        alpha_p = np.exp(1j * rng.phase_matrix(master, r, pidx))
        sums = _batch_prefix(alpha_p, sv.spf_index, cof, xs[order])
        out[lo : lo + r.size][:, order] = sums
    return out


def sums_to_csv(master: int, replicas, xs, sums: np.ndarray) -> str:
    """One row per (replica, x) with the normalized sum S_x, for plotting."""
    xs = np.asarray(xs, dtype=np.int64)
    lines = ["master,replica,x,re,im"]
    for i, r in enumerate(np.asarray(replicas, dtype=np.uint64)):
        for j, x in enumerate(xs):
            s = sums[i, j] / math.sqrt(x)
            lines.append(f"{master},{int(r)},{int(x)},{float(s.real)!r},{float(s.imag)!r}")
    return "\n".join(lines) + "\n"
