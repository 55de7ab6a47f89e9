"""Randomized Euler products A_y(sigma + it) and the functionals built on them.

On uniform t-grids the per-prime rotations p^{-ih} are applied by complex
multiplication and re-anchored with exact sines and cosines every
``_ANCHOR`` steps, so a grid point costs a few flops per prime.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from . import rng
from .errors import DomainError, TruncationWarning
from .primes import primes_up_to, sieve
from .rng import PhaseAssignment

_ANCHOR = 256
G3_CUTOFF = 1e-18

# E[sup_{s in [n, n+1]} exp(lam Re G_{y,2}(s))] on 256 points peaks at sigma = 1/2
# and large y: 1.574 (|lam| = 1) and 2.86 (|lam| = 2) at y = 1e4 with 2e4
# replicas, equal for n = 0 and n = 7; frozen with room for smaller runs
G2_SUP_ENVELOPE = {1.0: 1.75, 2.0: 3.4}


@numba.njit(cache=True, nogil=True, fastmath=True)
def _euler_abs2(c_re, c_im, logp, t0, h, n):
    """|prod_p (1 - c_p p^{-it})^{-1}|^2 at t = t0 + k h, k < n."""
    P = c_re.shape[0]
    out = np.empty(n)
    w_re = np.empty(P)
    w_im = np.empty(P)
    r_re = np.cos(h * logp)
    r_im = -np.sin(h * logp)
    for k in range(n):
        if k % _ANCHOR == 0:
            t = t0 + k * h
            for j in range(P):
                w_re[j] = math.cos(t * logp[j])
                w_im[j] = -math.sin(t * logp[j])
        else:
            for j in range(P):
                a = w_re[j] * r_re[j] - w_im[j] * r_im[j]
                w_im[j] = w_re[j] * r_im[j] + w_im[j] * r_re[j]
                w_re[j] = a
        prod = 1.0
        for j in range(P):
            v_re = 1.0 - (c_re[j] * w_re[j] - c_im[j] * w_im[j])
            v_im = -(c_re[j] * w_im[j] + c_im[j] * w_re[j])
            prod *= v_re * v_re + v_im * v_im
        out[k] = 1.0 / prod
    return out


@numba.njit(cache=True, nogil=True, fastmath=True)
def _dirichlet_abs2(a_re, a_im, logn, t0, h, n):
    """|sum_j a_j n_j^{-it}|^2 at t = t0 + k h, k < n."""
    P = a_re.shape[0]
    out = np.empty(n)
    w_re = np.empty(P)
    w_im = np.empty(P)
    r_re = np.cos(h * logn)
    r_im = -np.sin(h * logn)
    for k in range(n):
        if k % _ANCHOR == 0:
            t = t0 + k * h
            for j in range(P):
                w_re[j] = math.cos(t * logn[j])
                w_im[j] = -math.sin(t * logn[j])
        else:
            for j in range(P):
                a = w_re[j] * r_re[j] - w_im[j] * r_im[j]
                w_im[j] = w_re[j] * r_im[j] + w_im[j] * r_re[j]
                w_re[j] = a
        s_re = 0.0
        s_im = 0.0
        for j in range(P):
            s_re += a_re[j] * w_re[j] - a_im[j] * w_im[j]
            s_im += a_re[j] * w_im[j] + a_im[j] * w_re[j]
        out[k] = s_re * s_re + s_im * s_im
    return out


def _prime_data(assignment: PhaseAssignment, y: float):
    ps = primes_up_to(y)
    theta = assignment.phases_by_index(np.arange(len(ps)))
    return ps.astype(np.float64), theta


# ------------------------------------------------------------- field samples


@dataclass(frozen=True)
class EulerFieldSample:
    y: float
    sigma: float
    grid: np.ndarray
    A: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray

    def reconstruction_error(self) -> np.ndarray:
        """Relative error of exp(G1 + G2/2 + G3) against the direct product."""
        rebuilt = np.exp(self.G1 + 0.5 * self.G2 + self.G3)
        return np.abs(rebuilt - self.A) / np.abs(self.A)


def g3_terms(p: float) -> int:
    """Largest j kept in the G3 series for prime p (p^{-j/2} >= 1e-18)."""
    return int(math.floor(2.0 * math.log(1.0 / G3_CUTOFF) / math.log(p)))


def evaluate_field(assignment: PhaseAssignment, y: float, sigma: float, grid, chunk: int = 512) -> EulerFieldSample:
    """A_y(sigma + it) and its three prime-sum pieces on an arbitrary t-grid."""
    if sigma < 0.5:
        raise DomainError(f"sigma must be >= 1/2, got {sigma}")
    if y < 2:
        raise DomainError(f"y must be >= 2, got {y}")
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    ps, theta = _prime_data(assignment, y)
    logp = np.log(ps)
    jmax = np.array([g3_terms(p) for p in ps])
    A = np.empty(grid.size, dtype=np.complex128)
    G1 = np.empty_like(A)
    G2 = np.empty_like(A)
    G3 = np.empty_like(A)
    coef = np.exp(1j * theta) * ps**-sigma
    for lo in range(0, grid.size, chunk):
        t = grid[lo : lo + chunk]
        z = coef[None, :] * np.exp(-1j * np.outer(t, logp))
        A[lo : lo + t.size] = 1.0 / np.prod(1.0 - z, axis=1)
        G1[lo : lo + t.size] = z.sum(axis=1)
        z2 = z * z
        G2[lo : lo + t.size] = z2.sum(axis=1)
        g3 = np.zeros(t.size, dtype=np.complex128)
        zj = z2
        for j in range(3, int(jmax.max(initial=2)) + 1):
            k = int(np.count_nonzero(jmax >= j))
            if k == 0:
                break
            zj = zj[:, :k] * z[:, :k]
            g3 += zj.sum(axis=1) / j
        G3[lo : lo + t.size] = g3
    return EulerFieldSample(float(y), float(sigma), grid, A, G1, G2, G3)


def g3_bound(limit: int = 10_000_000) -> float:
    """K3 = sum_p sum_{j >= 3} p^{-j/2}, as a certified upper value.

    Primes up to ``limit`` are summed exactly (inner geometric series in closed
    form); the rest is bounded by the same series over all integers > limit.
    """
    ps = primes_up_to(limit).astype(np.float64)
    head = float(np.sum(ps**-1.5 / (1.0 - ps**-0.5)))
    tail = 2.0 / math.sqrt(limit) / (1.0 - limit**-0.5)
    return head + tail


# ----------------------------------------------------------------- quadrature


def default_step(y: float) -> float:
    """pi / (8 log y), capped at pi/32 for small y."""
    return min(math.pi / (8.0 * math.log(y)), math.pi / 32.0)


def _simpson(f, a: float, b: float, h: float) -> float:
    n = max(2, int(math.ceil((b - a) / h)))
    n += n % 2
    step = (b - a) / n
    v = f(a, step, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(step / 3.0 * np.dot(w, v))


def _tail_integral(T: float) -> float:
    """int_{|t| > T} dt / (1/4 + t^2)."""
    return 4.0 * (math.pi / 2.0 - math.atan(2.0 * T))


@dataclass(frozen=True)
class Quadrature:
    value: float
    quadrature: float
    tail_estimate: float
    T_max: float
    h: float
    converged: bool


def _adaptive(f, mean_square: float, T0: float, h: float, eps: float, max_points: int) -> Quadrature:
    """Integrate f over R, doubling the window until both the last extension and
    the estimated tail fall below eps times the running total.

    ``f(t0, step, n)`` returns |F(1/2 + it)|^2 on a uniform grid; the weight
    1/(1/4 + t^2) is applied here. ``mean_square`` is the mean value of |F|^2,
    used for the tail beyond the final window.
    """

    def g(t0, step, n):
        t = t0 + step * np.arange(n)
        return f(t0, step, n) / (0.25 + t * t)

    T = float(T0)
    total = _simpson(g, -T, T, h)
    used = 2 * T / h
    converged = False
    while True:
        if used + 2 * T / h > max_points:
            break
        add = _simpson(g, -2 * T, -T, h) + _simpson(g, T, 2 * T, h)
        total += add
        used += 2 * T / h
        T *= 2
        if add < eps * total and mean_square * _tail_integral(T) < eps * total:
            converged = True
            break
    tail = mean_square * _tail_integral(T)
    if not converged:
        warnings.warn(f"tail criterion not met at T_max={T}", TruncationWarning, stacklevel=3)
    return Quadrature(total + tail, total, tail, T, h, converged)


@dataclass(frozen=True)
class IntegralFunctional:
    """I_y = (1/log y) int_R |A_y(1/2+it)|^2 / |1/2+it|^2 dt."""

    y: float
    value: float
    quadrature: float
    tail_estimate: float
    T_max: float
    h: float
    converged: bool

    def to_record(self) -> dict:
        return {k: getattr(self, k) for k in ("y", "value", "quadrature", "tail_estimate", "T_max", "h", "converged")}


def mean_square_A(y: float, sigma: float = 0.5) -> float:
    """Mean value of |A_y(sigma + it)|^2 over t (independent of the phases)."""
    ps = primes_up_to(y).astype(np.float64)
    return float(np.exp(-np.sum(np.log1p(-(ps ** (-2 * sigma))))))


def integral_functional(assignment: PhaseAssignment, y: float, T_max: float = 8.0, h: float | None = None,
                        eps: float = 1e-4, max_points: int = 50_000_000) -> IntegralFunctional:
    if y < 3:
        raise DomainError(f"y must be >= 3, got {y}")
    if T_max < 1:
        raise DomainError("T_max must be >= 1")
    h = default_step(y) if h is None else float(h)
    if h > math.pi / (8 * math.log(y)) + 1e-15:
        raise DomainError(f"step {h} does not resolve scale 1/log y")
    ps, theta = _prime_data(assignment, y)
    c = np.exp(1j * theta) / np.sqrt(ps)
    c_re, c_im, logp = c.real.copy(), c.imag.copy(), np.log(ps)

    def f(t0, step, n):
        return _euler_abs2(c_re, c_im, logp, t0, step, n)

    q = _adaptive(f, mean_square_A(y), T_max, h, eps, max_points)
    ly = math.log(y)
    return IntegralFunctional(float(y), q.value / ly, q.quadrature / ly, q.tail_estimate / ly, q.T_max, q.h, q.converged)


# ------------------------------------------------------------------- Parseval


@dataclass(frozen=True)
class ParsevalCheck:
    lhs: float
    rhs: float
    terms: int
    rhs_detail: Quadrature

    @property
    def relative_error(self) -> float:
        return abs(self.lhs - self.rhs) / abs(self.lhs)

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.relative_error))


def prefix_form(f: np.ndarray) -> float:
    """2 pi int_0^inf |sum_{n <= t} f(n)|^2 dt / t^2 for f supported on 1..N.

    ``f[0]`` is ignored; f[n] is the value at n. Exact as a finite sum.
    """
    N = f.shape[0] - 1
    P = np.cumsum(f[1:])
    r = np.arange(1, N + 1, dtype=np.float64)
    w = 1.0 / r - 1.0 / (r + 1.0)
    w[-1] = 1.0 / N
    return float(2 * math.pi * np.sum(np.abs(P) ** 2 * w))


def dirichlet_quadrature(f: np.ndarray, T_max: float = 8.0, h: float | None = None, eps: float = 1e-4,
                         max_points: int = 50_000_000) -> Quadrature:
    """int_R |sum_n f(n) n^{-1/2-it}|^2 / |1/2+it|^2 dt by adaptive Simpson."""
    n = np.nonzero(f)[0]
    n = n[n >= 1]
    if n.size == 0:
        return Quadrature(0.0, 0.0, 0.0, T_max, 0.0, True)
    a = f[n] / np.sqrt(n)
    logn = np.log(n.astype(np.float64))
    if h is None:
        h = min(math.pi / (8.0 * max(math.log(max(n.max(), 2)), 1.0)), math.pi / 32)
    a_re, a_im = np.ascontiguousarray(a.real, dtype=np.float64), np.ascontiguousarray(a.imag, dtype=np.float64)

    def g(t0, step, k):
        return _dirichlet_abs2(a_re, a_im, logn, t0, step, k)

    return _adaptive(g, float(np.sum(np.abs(f[n]) ** 2 / n)), T_max, h, eps, max_points)


def parseval_check(assignment: PhaseAssignment, y: float, N_trunc: int, T_max: float = 8.0,
                   h: float | None = None, eps: float = 1e-4) -> ParsevalCheck:
    """Both sides of Parseval for f(n) = alpha(n) 1[n y-smooth] 1[n <= N_trunc]."""
    from .multiplicative import build_table, smooth_mask

    table = build_table(assignment, N_trunc)
    mask = smooth_mask(N_trunc, y).mask
    f = np.where(mask, table.values, 0.0)
    lhs = prefix_form(f)
    q = dirichlet_quadrature(f, T_max, h, eps)
    return ParsevalCheck(lhs, q.value, int(np.count_nonzero(mask)), q)


def smooth_numbers(y: float, n_max: int):
    """Sorted y-smooth n <= n_max with their exponent vectors over primes <= y."""
    ps = [int(p) for p in primes_up_to(y)]
    nums = np.array([1], dtype=np.int64)
    exps = np.zeros((1, len(ps)), dtype=np.int16)
    for j, p in enumerate(ps):
        parts_n = [nums]
        parts_e = [exps]
        cur_n, cur_e = nums, exps
        while True:
            keep = cur_n <= n_max // p
            if not keep.any():
                break
            cur_n = cur_n[keep] * p
            cur_e = cur_e[keep].copy()
            cur_e[:, j] += 1
            parts_n.append(cur_n)
            parts_e.append(cur_e)
        nums = np.concatenate(parts_n)
        exps = np.concatenate(parts_e)
    order = np.argsort(nums, kind="stable")
    return nums[order], exps[order]


def integral_functional_dual(theta: np.ndarray, nums: np.ndarray, exps: np.ndarray, y: float) -> np.ndarray:
    """I_y from the prefix-sum side of Parseval, support truncated at nums[-1].

    ``theta`` has shape (R, #primes <= y); returns one value per row.
    """
    alpha = np.exp(1j * (theta @ exps.T.astype(np.float64)))
    P = np.cumsum(alpha, axis=1)
    n = nums.astype(np.float64)
    w = np.empty_like(n)
    w[:-1] = 1.0 / n[:-1] - 1.0 / n[1:]
    w[-1] = 1.0 / n[-1]
    return 2 * math.pi * (np.abs(P) ** 2 @ w) / math.log(y)


# ---------------------------------------------------------------- G2 moments


def g2_real_batch(theta: np.ndarray, ps: np.ndarray, sigma: float, s) -> np.ndarray:
    """Re G_{y,2}(s; sigma) = sum_p p^{-2 sigma} cos(2 theta_p - 2 s log p), rows = replicas."""
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    amp = ps ** (-2 * sigma)
    ang = 2.0 * np.outer(np.log(ps), s)
    return (np.cos(2 * theta) * amp) @ np.cos(ang) + (np.sin(2 * theta) * amp) @ np.sin(ang)


@dataclass(frozen=True)
class ScalarEstimate:
    estimate: float
    stderr: float
    replicas: int

    @property
    def ci95(self) -> tuple[float, float]:
        return self.estimate - 1.96 * self.stderr, self.estimate + 1.96 * self.stderr


def _estimate(v: np.ndarray) -> ScalarEstimate:
    n = v.size
    return ScalarEstimate(float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0, n)


def g2_exponential_moment(lam: float, y: float, sigma: float, window: int, replicas: int, seed: int,
                          points: int = 256, sup: bool = True, chunk: int = 4096) -> ScalarEstimate:
    """E[sup_{s in [n, n+1]} exp(lam Re G_{y,2}(s))], sup over ``points`` grid points.

    With ``sup=False`` the single point s = n is used instead.
    """
    if not -4.0 <= lam <= 4.0:
        raise DomainError(f"lambda must lie in [-4, 4], got {lam}")
    if lam == 0:
        return ScalarEstimate(1.0, 0.0, replicas)
    ps = primes_up_to(y).astype(np.float64)
    s = window + np.linspace(0.0, 1.0, points) if sup else np.array([float(window)])
    vals = np.empty(replicas)
    for lo in range(0, replicas, chunk):
        r = np.arange(lo, min(replicas, lo + chunk))
        theta = rng.phase_matrix(seed, r, np.arange(ps.size))
        g = g2_real_batch(theta, ps, sigma, s)
        vals[lo : lo + r.size] = np.exp(lam * g.max(axis=1) if lam > 0 else lam * g.min(axis=1))
    return _estimate(vals)


@dataclass(frozen=True)
class TailCurve:
    u: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    replicas: int

    def stderr(self) -> np.ndarray:
        p = np.maximum(self.empirical, np.minimum(self.bound, 1.0))
        return np.sqrt(p * (1 - p) / self.replicas)

    def respected(self, k: float = 4.0) -> bool:
        return bool(np.all(self.empirical <= self.bound + k * self.stderr()))


def increment_tail_bound(u, gap: float) -> np.ndarray:
    """2 exp(-u^2 / (16 |s - t|^2))."""
    u = np.asarray(u, dtype=np.float64)
    return 2.0 * np.exp(-(u**2) / (16.0 * gap**2))


def g2_increment_tail(y: float, sigma: float, s: float, t: float, u_grid, replicas: int, seed: int,
                      chunk: int = 16384) -> TailCurve:
    if s == t:
        raise DomainError("s and t must differ")
    u = np.asarray(u_grid, dtype=np.float64)
    ps = primes_up_to(y).astype(np.float64)
    counts = np.zeros(u.size)
    for lo in range(0, replicas, chunk):
        r = np.arange(lo, min(replicas, lo + chunk))
        theta = rng.phase_matrix(seed, r, np.arange(ps.size))
        g = g2_real_batch(theta, ps, sigma, [s, t])
        d = np.abs(g[:, 0] - g[:, 1])
        counts += (d[:, None] >= u[None, :]).sum(axis=0)
    return TailCurve(u, counts / replicas, increment_tail_bound(u, abs(s - t)), replicas)


def log_square_prime_sum(limit: int = 10_000_000) -> tuple[float, float]:
    """(sum_{p <= limit} p^{-2} log^2 p, bound on the rest).

    The rest is at most int_{limit-1}^inf log^2 x / x^2 dx.
    """
    ps = primes_up_to(limit).astype(np.float64)
    head = float(np.sum(np.log(ps) ** 2 / ps**2))
    L = limit - 1.0
    lg = math.log(L)
    return head, (lg * lg + 2 * lg + 2) / L


def prime_power_sum(y: float, sigma: float) -> float:
    """sum_{p <= y} p^{-4 sigma}."""
    ps = primes_up_to(y).astype(np.float64)
    return float(np.sum(ps ** (-4 * sigma)))


# ------------------------------------------------------------ shift invariance


def abs_moments(y: float, sigma: float, grid, replicas: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-replica mean of |A| and |A|^2 over ``grid``; arrays of length ``replicas``."""
    ps = primes_up_to(y).astype(np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    m1 = np.empty(replicas)
    m2 = np.empty(replicas)
    ang = np.outer(np.log(ps), grid)
    amp = ps**-sigma
    for r in range(replicas):
        theta = rng.phase_matrix(seed, [r], np.arange(ps.size))[0]
        z = (amp * np.exp(1j * theta))[:, None] * np.exp(-1j * ang)
        a2 = np.exp(-np.sum(np.log(np.abs(1.0 - z) ** 2), axis=0))
        m1[r] = np.mean(np.sqrt(a2))
        m2[r] = np.mean(a2)
    return m1, m2
