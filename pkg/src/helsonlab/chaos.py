"""Gaussian analogue of Re G_{y,1}, critical chaos moments, and Kahane comparisons.

The field is G(t) = Re sum_{p <= y} Z_p p^{-1/2 - it} with independent standard
complex Gaussians Z_p, sampled by summing per-prime contributions (cost
#primes x #grid), so its covariance is known in closed form:
E[G(s) G(t)] = (1/2) sum_{p <= y} cos((s - t) log p) / p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FactorizationError, PreconditionError
from .primes import primes_up_to
from .rng import Seed, normal_generator

TAG_FIELD = 0x47617573  # "Gaus"
TAG_KAHANE = 0x4B61686E  # "Kahn"

# sup of the covariance gap over y in {1e2, ..., 1e6} is 0.1980 (at y = 1e6,
# stable under 8x grid refinement); frozen with a little room
COVARIANCE_GAP_ENVELOPE = 0.21


def _basis(y: float, grid: np.ndarray):
    ps = primes_up_to(y).astype(np.float64)
    ang = np.outer(np.log(ps), grid)
    amp = (1.0 / np.sqrt(2.0 * ps))[:, None]
    return amp * np.cos(ang), amp * np.sin(ang)


def exact_covariance(y: float, s, t) -> np.ndarray:
    ps = primes_up_to(y).astype(np.float64)
    d = np.abs(np.asarray(s, dtype=np.float64) - np.asarray(t, dtype=np.float64))
    flat = d.reshape(-1)
    out = np.empty(flat.size)
    logp, w = np.log(ps), 0.5 / ps
    step = max(1, (1 << 24) // max(ps.size, 1))  # keep the cosine block near 128 MiB
    for lo in range(0, flat.size, step):
        out[lo : lo + step] = np.cos(np.multiply.outer(flat[lo : lo + step], logp)) @ w
    return out.reshape(d.shape)


def marginal_variance(y: float) -> float:
    return 0.5 * float(np.sum(1.0 / primes_up_to(y).astype(np.float64)))


@dataclass(frozen=True)
class GaussianFieldSample:
    y: float
    grid: np.ndarray
    values: np.ndarray

    def kernel(self) -> np.ndarray:
        return exact_covariance(self.y, self.grid[:, None], self.grid[None, :])


def sample_gaussian_fields(master: int, y: float, grid, replicas) -> np.ndarray:
    """One row per replica index in ``replicas``; row r depends only on (master, r)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size and (grid.min() < 0 or grid.max() > 1):
        raise DomainError("grid must lie in [0, 1]")
    replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    C, S = _basis(y, grid)
    P = C.shape[0]
    X = np.empty((replicas.size, P))
    Y = np.empty((replicas.size, P))
    for i, r in enumerate(replicas):
        g = normal_generator(master, TAG_FIELD, int(r))
        X[i] = g.standard_normal(P)
        Y[i] = g.standard_normal(P)
    return X @ C + Y @ S


def sample_gaussian_field(seed: Seed, y: float, grid) -> GaussianFieldSample:
    grid = np.asarray(grid, dtype=np.float64)
    values = sample_gaussian_fields(seed.master, y, grid, [seed.replica])[0]
    return GaussianFieldSample(float(y), grid, values)


def log_kernel(y: float, d) -> np.ndarray:
    """(1/2) log(min(1/|s-t|, log y)), with d = 0 mapped to (1/2) log log y."""
    d = np.asarray(d, dtype=np.float64)
    ly = math.log(y)
    with np.errstate(divide="ignore"):
        inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), np.inf)
    return 0.5 * np.log(np.minimum(inv, ly))


def covariance_gap_profile(y: float, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    return np.abs(exact_covariance(y, d, 0.0) - log_kernel(y, d))


def covariance_gap(y: float, grid_pairs) -> float:
    """sup over (s, t) pairs of |E[G(s)G(t)] - (1/2) log(min(1/|s-t|, log y))|."""
    pairs = np.asarray(grid_pairs, dtype=np.float64).reshape(-1, 2)
    d = np.abs(pairs[:, 0] - pairs[:, 1])
    return float(covariance_gap_profile(y, d).max())


def gap_distances(n_log: int = 400, n_lin: int = 400) -> np.ndarray:
    """Distances |s - t| in [0, 1] covering both sides of 1/log y for y up to 1e6."""
    return np.unique(np.concatenate([[0.0], np.logspace(-8, 0, n_log), np.linspace(0, 1, n_lin)]))


# ---------------------------------------------------------------- GMC moments


@dataclass(frozen=True)
class GMCMeasureEstimate:
    y: float
    q: float
    estimate: float
    ci: tuple[float, float]
    replicas: int
    mean: float
    stderr: float
    coarse_estimate: float
    resolution: int

    @property
    def halving_change(self) -> float:
        """Relative change of the estimate when the grid is coarsened by two."""
        return abs(self.coarse_estimate - self.estimate) / self.estimate if self.estimate else 0.0


def median_of_batches(v: np.ndarray, batches: int = 10) -> tuple[float, tuple[float, float]]:
    """Median of contiguous batch means and a normal-theory 95% band around it."""
    v = np.asarray(v, dtype=np.float64)
    b = min(batches, v.size)
    means = np.array([m.mean() for m in np.array_split(v, b)])
    med = float(np.median(means))
    if b < 2:
        return med, (med, med)
    # the median of b normal batch means has sd ~ sqrt(pi/2) * sd(mean)
    half = 1.96 * math.sqrt(math.pi / 2) * float(np.std(means, ddof=1)) / math.sqrt(b)
    return med, (med - half, med + half)


def gmc_mass(master: int, y: float, replicas, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """mu_y per replica on the fine grid and on every other point of it."""
    grid = np.arange(resolution) / resolution
    G = sample_gaussian_fields(master, y, grid, replicas)
    ly = math.log(y)
    norm = math.sqrt(math.log(ly)) / ly
    e = np.exp(2.0 * G)
    return norm * e.mean(axis=1), norm * e[:, ::2].mean(axis=1)


def default_resolution(y: float) -> int:
    return int(max(32, 2 ** math.ceil(math.log2(8 * math.log(y)))))


def gmc_moment(y: float, q: float, replicas: int, grid_resolution: int | None = None, seed: int = 0,
               chunk: int = 1024, batches: int = 10) -> GMCMeasureEstimate:
    """E[mu_y^q] for mu_y = (sqrt(log log y) / log y) int_0^1 exp(2 G(t)) dt."""
    if not 0 <= q < 1:
        raise DomainError(f"q must lie in [0, 1), got {q}")
    n = default_resolution(y) if grid_resolution is None else int(grid_resolution)
    if n < 4 * math.log(y):
        raise DomainError(f"resolution {n} below 4 log y")
    if q == 0:
        return GMCMeasureEstimate(float(y), 0.0, 1.0, (1.0, 1.0), replicas, 1.0, 0.0, 1.0, n)
    fine = np.empty(replicas)
    coarse = np.empty(replicas)
    for lo in range(0, replicas, chunk):
        r = np.arange(lo, min(replicas, lo + chunk))
        f, c = gmc_mass(seed, y, r, n)
        fine[lo : lo + r.size] = f ** q
        coarse[lo : lo + r.size] = c ** q
    est, ci = median_of_batches(fine, batches)
    cest, _ = median_of_batches(coarse, batches)
    return GMCMeasureEstimate(float(y), float(q), est, ci, replicas, float(fine.mean()),
                              float(fine.std(ddof=1) / math.sqrt(replicas)), cest, n)


# -------------------------------------------------------------------- Kahane


@dataclass(frozen=True)
class KahaneResult:
    momentY: float
    momentZ: float
    stderrY: float
    stderrZ: float
    replicas: int

    @property
    def gap(self) -> float:
        return self.momentY - self.momentZ

    @property
    def joint_stderr(self) -> float:
        return math.hypot(self.stderrY, self.stderrZ)

    def holds(self, k: float = 4.0) -> bool:
        return self.momentY >= self.momentZ - k * self.joint_stderr

    def __iter__(self):
        return iter((self.momentY, self.momentZ, self.gap))


def _factor(K: np.ndarray) -> np.ndarray:
    K = 0.5 * (K + K.T)
    lam, V = np.linalg.eigh(K)
    floor = -1e-10 * max(float(np.trace(K)), 1e-300)
    if lam.min() < floor:
        raise FactorizationError(f"kernel not positive semidefinite (min eigenvalue {lam.min():.3e})")
    return V * np.sqrt(np.clip(lam, 0.0, None))


def chaos_moment(K: np.ndarray, q: float, weights: np.ndarray, replicas: int, gen: np.random.Generator,
                 chunk: int = 65536) -> tuple[float, float]:
    """Mean and standard error of (sum_i w_i exp(Y_i - Var Y_i / 2))^q for Y ~ N(0, K)."""
    L = _factor(K)
    half = 0.5 * np.diag(K)
    vals = np.empty(replicas)
    for lo in range(0, replicas, chunk):
        m = min(chunk, replicas - lo)
        Y = gen.standard_normal((m, K.shape[0])) @ L.T
        vals[lo : lo + m] = (np.exp(Y - half) @ weights) ** q
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))


def kahane_compare(kernelY, kernelZ, q: float, replicas: int, grid=None, seed: int = 0, trial: int = 0) -> KahaneResult:
    """Moments of the discretized chaos for two fields with kernelY <= kernelZ pointwise."""
    KY = np.asarray(kernelY, dtype=np.float64)
    KZ = np.asarray(kernelZ, dtype=np.float64)
    if not 0 < q < 1:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    scale = max(float(np.abs(KZ).max()), 1.0)
    if np.any(KY > KZ + 1e-12 * scale):
        raise PreconditionError("kernelY must be dominated by kernelZ pointwise")
    n = KY.shape[0]
    if grid is None:
        weights = np.full(n, 1.0 / n)
    else:
        g = np.asarray(grid, dtype=np.float64)
        weights = np.full(n, (g.max() - g.min()) / (n - 1) if n > 1 else 1.0)
    mY, sY = chaos_moment(KY, q, weights, replicas, normal_generator(seed, TAG_KAHANE, trial, 0))
    mZ, sZ = chaos_moment(KZ, q, weights, replicas, normal_generator(seed, TAG_KAHANE, trial, 1))
    return KahaneResult(mY, mZ, sY, sZ, replicas)


def random_dominated_pair(gen: np.random.Generator, n: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """(KY, KZ) with both PSD and KY <= KZ entrywise: KZ = KY + (c c^T + diag(d)), c, d >= 0."""
    B = gen.standard_normal((n, n))
    KY = B @ B.T / n
    c = np.abs(gen.standard_normal(n)) * gen.uniform(0.2, 1.0)
    d = np.abs(gen.standard_normal(n)) * 0.2
    return KY, KY + np.outer(c, c) + np.diag(d)


def shift_factor(q: float, C: float) -> float:
    """E[exp(q N - q C/2)] for N ~ N(0, C): the moment ratio for a constant kernel shift C."""
    return math.exp(-0.5 * q * (1 - q) * C)
