"""Moment-decay, inequality-budget and I_y-moment experiments with tabular output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from .chaos import median_of_batches
from .config import check_memory
from .counting import psi
from .errors import DomainError, PreconditionError
from .euler import integral_functional, integral_functional_dual, smooth_numbers
from .multiplicative import batch_partial_sums, expected_t1, table_bytes
from .parallel import map_replicas
from .primes import prime_count
from .rng import PhaseAssignment, Seed, phase_matrix

EXPERIMENTS = ("moment-decay", "lemma-budget", "lemma13")
CSV_COLUMNS = ("quantity", "x_or_y", "q", "estimate", "ci_lo", "ci_hi", "replicas", "seed")
Z95 = 1.959963984540054

S_MOMENT = "|S_x|^{2q}"
I_MOMENT = "I_y^q"
I_NORMALIZED = "I_y^q*(loglog y)^{q/2}"
I_DUAL = "I_y^q[dual]"
SMOOTH_REMAINDER = "((log y)^C exp(-c log x/log y))^q"
BUDGET_RATIO = "lhs/(rhs1+rhs2)"


@dataclass
class ExperimentConfig:
    experiment: str
    x_grid: list[float] = field(default_factory=list)
    y_rule: str = "paper"
    y_grid: list[float] = field(default_factory=list)
    q_list: list[float] = field(default_factory=lambda: [0.5])
    delta: float = 0.1
    replicas: int = 1000
    seed: int = 0
    output: str | None = None
    format: str = "csv"
    T_exponent: float = 0.75
    C: float = 1.0
    c: float = 1.0
    eps: float = 1e-3
    control_variate: bool = True
    dual_check: bool = True
    dual_y: float = 31.0
    dual_n_max: int = 100_000_000
    chunk: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        for q in self.q_list:
            # q = 1 is accepted as the exactly known calibration column
            if not (0 <= q <= 1 - self.delta or q == 1):
                raise DomainError(f"q={q} outside [0, 1 - delta] = [0, {1 - self.delta}]")
        if any(b <= a for a, b in zip(self.x_grid, self.x_grid[1:])):
            raise DomainError("x_grid must be strictly ascending")
        if any(b <= a for a, b in zip(self.y_grid, self.y_grid[1:])):
            raise DomainError("y_grid must be strictly ascending")
        if self.replicas < 100:
            raise DomainError(f"replicas must be >= 100, got {self.replicas}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.format not in ("json", "csv"):
            raise DomainError(f"format must be json or csv, got {self.format!r}")
        if self.chunk < 1:
            raise DomainError("chunk must be positive")
        y_of_x(3.0e3, self.y_rule)  # rejects malformed rules early

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except OSError as e:
            raise OSError(f"cannot read config {path}: {e}") from e

    def to_dict(self) -> dict:
        return asdict(self)


def y_of_x(x: float, rule: str) -> float:
    """y(x) for a rule: 'paper' (log y = log x / (log log x)^2), 'sqrt', 'power:a' or 'fixed:y'."""
    if rule == "paper":
        lx = math.log(x)
        return math.exp(lx / math.log(lx) ** 2)
    if rule == "sqrt":
        return math.sqrt(x)
    kind, _, arg = rule.partition(":")
    try:
        v = float(arg)
    except ValueError:
        raise DomainError(f"malformed y rule {rule!r}") from None
    if kind == "power":
        return x**v
    if kind == "fixed":
        return v
    raise DomainError(f"unknown y rule {rule!r}")


@dataclass(frozen=True)
class MomentEstimate:
    quantity: str
    x_or_y: float
    q: float
    estimate: float
    ci_lo: float
    ci_hi: float
    replicas: int
    seed: int
    stderr: float = 0.0
    method: str = "mean"

    def __post_init__(self):
        if not self.ci_lo <= self.estimate <= self.ci_hi:
            raise ValueError(f"CI [{self.ci_lo}, {self.ci_hi}] misses estimate {self.estimate}")
        if self.estimate < 0:
            raise ValueError("moment estimates are nonnegative")

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_lo, self.ci_hi

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    estimates: list[MomentEstimate]
    checks: dict[str, bool]
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def find(self, quantity: str, x_or_y: float, q: float) -> MomentEstimate:
        for e in self.estimates:
            if e.quantity == quantity and e.x_or_y == x_or_y and e.q == q:
                return e
        raise KeyError((quantity, x_or_y, q))


def _normal(quantity, at, q, est, se, replicas, seed, method="mean") -> MomentEstimate:
    half = Z95 * se
    return MomentEstimate(quantity, float(at), float(q), float(est), float(est - half), float(est + half),
                          int(replicas), int(seed), float(se), method)


def _exact(quantity, at, q, value, replicas, seed) -> MomentEstimate:
    return MomentEstimate(quantity, float(at), float(q), float(value), float(value), float(value),
                          int(replicas), int(seed), 0.0, "exact")


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def control_variate_mean(v: np.ndarray, c: np.ndarray, c_mean: float) -> tuple[float, float]:
    """Mean of v corrected by a control c with known mean; returns (estimate, stderr)."""
    cc = c - c_mean
    var = float(np.dot(cc - cc.mean(), cc - cc.mean()))
    beta = float(np.dot(v - v.mean(), cc - cc.mean()) / var) if var > 0 else 0.0
    return _mean_se(v - beta * cc)


# --------------------------------------------------------------- moment decay


def normalized_sums(config: ExperimentConfig, xs, workers: int | None = None) -> np.ndarray:
    """|S_x| / sqrt(x) for replicas 0..R-1 of the configured seed, shape (R, len(xs))."""
    xs = np.asarray(xs, dtype=np.int64)
    check_memory(table_bytes(int(xs.max())), f"sieve for x={int(xs.max())}")

    def job(idx):
        return np.abs(batch_partial_sums(config.seed, idx, xs, chunk=config.chunk))

    return map_replicas(job, config.replicas, config.chunk, workers) / np.sqrt(xs.astype(np.float64))


def moment_estimates(a: np.ndarray, x: float, qs, config: ExperimentConfig) -> list[MomentEstimate]:
    """E|S_x|^{2q} / x^q from normalized magnitudes ``a`` of one x."""
    R, seed = a.size, config.seed
    floor_ratio = math.floor(x) / x
    out = []
    for q in qs:
        if q == 0:
            out.append(_exact(S_MOMENT, x, 0.0, 1.0, R, seed))
            continue
        v = a ** (2 * q)
        if q == 1 or not config.control_variate:
            est, se = _mean_se(v)
            method = "mean"
        else:
            est, se = control_variate_mean(v, a * a, floor_ratio)
            method = "control-variate"
        out.append(_normal(S_MOMENT, x, q, est, se, R, seed, method))
    return out


@dataclass(frozen=True)
class TrendFit:
    """Weighted least squares of log E against log log log x: linear versus constant."""

    slope: float
    intercept: float
    chi2_linear: float
    chi2_constant: float

    @property
    def linear_preferred(self) -> bool:
        # one extra parameter costs 2 in Akaike's criterion
        return self.slope < 0 and self.chi2_linear + 2.0 < self.chi2_constant


def trend_fit(xs, est, se) -> TrendFit:
    L = np.log(np.log(np.log(np.asarray(xs, dtype=np.float64))))
    y = np.log(np.asarray(est, dtype=np.float64))
    w = (np.asarray(est) / np.asarray(se)) ** 2
    c0 = float(np.sum(w * y) / np.sum(w))
    chi_c = float(np.sum(w * (y - c0) ** 2))
    A = np.stack([np.ones_like(L), L], axis=1) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)
    chi_l = float(np.sum(w * (y - coef[0] - coef[1] * L) ** 2))
    return TrendFit(float(coef[1]), float(coef[0]), chi_l, chi_c)


def _log_convex(ests: list[MomentEstimate], k: float = 4.0) -> bool:
    pts = sorted(ests, key=lambda e: e.q)
    for a, b, c in zip(pts, pts[1:], pts[2:]):
        w = (c.q - b.q) / (c.q - a.q)
        rel = math.sqrt(sum((e.stderr / e.estimate) ** 2 for e in (a, b, c)))
        if math.log(b.estimate) > w * math.log(a.estimate) + (1 - w) * math.log(c.estimate) + k * rel:
            return False
    return True


def run_moment_decay(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    if not config.x_grid:
        raise DomainError("x_grid is empty")
    xs = [int(x) for x in config.x_grid]
    if xs[0] < 1:
        raise DomainError("x must be >= 1")
    qs = sorted(set(config.q_list))
    a = normalized_sums(config, xs, workers)
    estimates: list[MomentEstimate] = []
    checks: dict[str, bool] = {}
    by_x: dict[int, dict[float, MomentEstimate]] = {}
    for j, x in enumerate(xs):
        # the q = 1 column is always computed: it feeds the Hölder sanity bound
        ests = moment_estimates(a[:, j], x, sorted(set(qs) | {1.0}), config)
        by_x[x] = {e.q: e for e in ests}
        estimates.extend(e for e in ests if e.q in qs)
        one = by_x[x][1.0]
        if 1.0 in qs:
            checks[f"q=1 matches floor(x)/x at x={x}"] = abs(one.estimate - math.floor(x) / x) <= 3 * one.stderr
        for q in qs:
            if 0 < q < 1:
                e = by_x[x][q]
                sd = math.hypot(e.stderr, q * one.estimate ** (q - 1) * one.stderr)
                checks[f"Hölder bound at x={x}, q={q}"] = e.estimate <= one.estimate**q + 4 * sd
        if len(by_x[x]) >= 3:
            checks[f"log-convex in q at x={x}"] = _log_convex(list(by_x[x].values()))
    extra: dict[str, Any] = {}
    if 0.5 in qs and len(xs) >= 2:
        col = [by_x[x][0.5] for x in xs]
        checks["q=1/2 strictly decreasing in x"] = all(b.estimate < a_.estimate for a_, b in zip(col, col[1:]))
        checks["q=1/2 first/last 95% CIs disjoint"] = col[-1].ci_hi < col[0].ci_lo
        if len(xs) >= 3:
            fit = trend_fit(xs, [e.estimate for e in col], [e.stderr for e in col])
            extra["trend_fit"] = asdict(fit)
            checks["q=1/2 log-log-log fit preferred over constant"] = fit.linear_preferred
    return ExperimentResult(config, estimates, checks, extra)


# --------------------------------------------------------------- I_y moments


def integral_values(config: ExperimentConfig, y: float, workers: int | None = None) -> np.ndarray:
    """I_y for replicas 0..R-1 of the configured seed."""

    def job(idx):
        return np.array([integral_functional(PhaseAssignment(Seed(config.seed, int(r))), y, eps=config.eps).value
                         for r in idx])

    return map_replicas(job, config.replicas, config.chunk, workers)


def dual_values(config: ExperimentConfig, y: float, n_max: int, workers: int | None = None) -> np.ndarray:
    """I_y from the prefix-sum form on y-smooth n <= n_max, same replicas as ``integral_values``."""
    nums, exps = smooth_numbers(y, n_max)
    pidx = np.arange(prime_count(y))

    def job(idx):
        return integral_functional_dual(phase_matrix(config.seed, idx, pidx), nums, exps, y)

    return map_replicas(job, config.replicas, 16, workers)


def power_moment(v: np.ndarray, q: float, quantity: str, at: float, config: ExperimentConfig,
                 scale: float = 1.0) -> MomentEstimate:
    R = v.size
    if q == 0:
        return _exact(quantity, at, 0.0, 1.0, R, config.seed)
    w = scale * v**q
    if q >= 0.75:
        med, (lo, hi) = median_of_batches(w)
        se = (hi - lo) / (2 * Z95)
        return MomentEstimate(quantity, float(at), float(q), med, lo, hi, R, config.seed, se, "median-of-batches")
    est, se = _mean_se(w)
    return _normal(quantity, at, q, est, se, R, config.seed)


def run_lemma13(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    if not config.y_grid:
        raise DomainError("y_grid is empty")
    qs = sorted(set(config.q_list))
    estimates: list[MomentEstimate] = []
    checks: dict[str, bool] = {}
    for y in config.y_grid:
        v = integral_values(config, y, workers)
        llog = math.log(math.log(y))
        for q in qs:
            estimates.append(power_moment(v, q, I_MOMENT, y, config))
            estimates.append(power_moment(v, q, I_NORMALIZED, y, config, scale=llog ** (q / 2)))
    for q in qs:
        col = [e.estimate for e in estimates if e.quantity == I_NORMALIZED and e.q == q]
        if q == 0:
            checks["q=0 normalized moments equal 1"] = all(c == 1.0 for c in col)
        elif q == 0.5 and len(col) >= 2:
            checks["q=1/2 normalized moments within factor 3"] = max(col) <= 3 * min(col)
    extra: dict[str, Any] = {}
    if config.dual_check:
        y = config.dual_y
        quad = integral_values(config, y, workers)
        dual = dual_values(config, y, config.dual_n_max, workers)
        extra["dual_max_replica_rel_diff"] = float(np.max(np.abs(quad - dual) / quad))
        for q in qs:
            eq = power_moment(quad, q, I_MOMENT, y, config)
            ed = power_moment(dual, q, I_DUAL, y, config)
            estimates.extend([eq, ed])
            checks[f"quadrature vs dual within 5% at y={y:g}, q={q}"] = abs(eq.estimate - ed.estimate) <= 0.05 * ed.estimate
    return ExperimentResult(config, estimates, checks, extra)


# ------------------------------------------------------------ inequality budget


def smooth_remainder(x: float, y: float, q: float, C: float = 1.0, c: float = 1.0) -> float:
    """((log y)^C exp(-c log x / log y))^q."""
    ly = math.log(y)
    return math.exp(q * (C * math.log(ly) - c * math.log(x) / ly))


def run_lemma_budget(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    if not config.x_grid:
        raise DomainError("x_grid is empty")
    xs = [int(x) for x in config.x_grid]
    ys = [y_of_x(x, config.y_rule) for x in xs]
    for x, y in zip(xs, ys):
        if not 2 <= y <= math.sqrt(x):
            raise PreconditionError(f"y={y:.6g} outside [2, sqrt(x)] for x={x}")
        if y < 3:
            raise PreconditionError(f"y={y:.6g} below 3, where I_y is not defined here")
    qs = [q for q in sorted(set(config.q_list)) if q > 0]
    if not qs:
        raise DomainError("q_list needs a positive q")
    a = normalized_sums(config, xs, workers)
    estimates: list[MomentEstimate] = []
    checks: dict[str, bool] = {}
    records = []
    I_cache: dict[float, np.ndarray] = {}
    for j, (x, y) in enumerate(zip(xs, ys)):
        if y not in I_cache:
            I_cache[y] = integral_values(config, y, workers)
        T = x**config.T_exponent
        diag = {"E|S_xy|^2": psi(x, y) / x, "E[T1]": expected_t1(x, y, T), "T": T}
        for q in qs:
            lhs = moment_estimates(a[:, j], x, [q], config)[0]
            rhs1 = power_moment(I_cache[y], q, I_MOMENT, y, config)
            rhs2 = smooth_remainder(x, y, q, config.C, config.c)
            den = rhs1.estimate + rhs2
            ratio = lhs.estimate / den
            rel = math.hypot(lhs.stderr / lhs.estimate, rhs1.stderr / den)
            estimates.extend([lhs, rhs1, _exact(SMOOTH_REMAINDER, x, q, rhs2, config.replicas, config.seed),
                              _normal(BUDGET_RATIO, x, q, ratio, ratio * rel, config.replicas, config.seed, "delta")])
            records.append({"x": x, "y": y, "q": q, "lhs": lhs.estimate, "rhs1": rhs1.estimate, "rhs2": rhs2,
                            "ratio": ratio, **diag})
            checks[f"finite ratio at x={x}, q={q}"] = math.isfinite(ratio) and ratio > 0
    for q in qs:
        r = [rec["ratio"] for rec in records if rec["q"] == q]
        if len(r) >= 2:
            # bounded trend: the ratio may not grow by more than a factor 2 across the grid
            checks[f"ratio bounded across x, q={q}"] = max(r) <= 2 * r[0]
    return ExperimentResult(config, estimates, checks, {"budget": records})


RUNNERS = {"moment-decay": run_moment_decay, "lemma-budget": run_lemma_budget, "lemma13": run_lemma13}


def run(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    return RUNNERS[config.experiment](config, workers)


# ------------------------------------------------------------------ emitting


def to_csv(estimates: list[MomentEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in estimates:
        w.writerow([repr(v) if isinstance(v, float) else v for v in e.row()])
    return buf.getvalue()


def from_csv(text: str) -> list[tuple]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("missing or malformed CSV header")
    types = (str, float, float, float, float, float, int, int)
    return [tuple(t(v) for t, v in zip(types, r)) for r in rows[1:]]


def to_json(result: ExperimentResult) -> str:
    doc = {
        "experiment": result.config.experiment,
        "config": result.config.to_dict(),
        "records": [asdict(e) for e in result.estimates],
        "checks": result.checks,
        "extra": result.extra,
    }
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n"


def records_from_json(text: str) -> list[MomentEstimate]:
    return [MomentEstimate(**r) for r in json.loads(text)["records"]]


def emit(config: ExperimentConfig, result: ExperimentResult | list[MomentEstimate], path: str | None = None) -> str:
    """Write CSV or JSON per ``config.format``; returns the text written."""
    if isinstance(result, list):
        result = ExperimentResult(config, result, {})
    text = to_csv(result.estimates) if config.format == "csv" else to_json(result)
    path = path if path is not None else config.output
    if path:
        try:
            parent = os.path.dirname(os.path.abspath(path))
            os.makedirs(parent, exist_ok=True)
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as e:
            raise OSError(f"cannot write {config.format} output to {path}: {e}") from e
    return text
