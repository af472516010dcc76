"""Monte Carlo and multilevel Monte Carlo estimators.

The MLMC driver follows the usual adaptive loop: take warm-up samples on
the active levels, allocate ``N_l`` to minimise cost for a sampling variance
of ``eps**2 / 2``, and add a level while the extrapolated bias squared
exceeds the other ``eps**2 / 2``. Samples are drawn from per-sample random
streams and accumulated in index order, so results do not depend on how
batches are split between workers.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize

from . import rng
from .problems import STANDARD, DarcyProblem

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-30


@dataclass
class LevelAccumulator:
    """Running sums of ``Y_l`` and its cost on one level."""

    level: int
    n: int = 0
    sum_y: float = 0.0
    sum_y2: float = 0.0
    sum_work: float = 0.0
    sum_seconds: float = 0.0

    def add(self, y, work=0.0, seconds=0.0):
        self.n += 1
        self.sum_y += y
        self.sum_y2 += y * y
        self.sum_work += work
        self.sum_seconds += seconds

    def extend(self, ys, works=None, seconds=None):
        ys = list(ys)
        works = works if works is not None else [0.0] * len(ys)
        seconds = seconds if seconds is not None else [0.0] * len(ys)
        for y, w, t in zip(ys, works, seconds):
            self.add(y, w, t)

    def merge(self, other: "LevelAccumulator") -> "LevelAccumulator":
        if other.level != self.level:
            raise ValueError("cannot merge accumulators of different levels")
        return LevelAccumulator(
            self.level,
            self.n + other.n,
            self.sum_y + other.sum_y,
            self.sum_y2 + other.sum_y2,
            self.sum_work + other.sum_work,
            self.sum_seconds + other.sum_seconds,
        )

    @property
    def mean(self) -> float:
        return self.sum_y / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        if self.n < 2:
            return math.nan
        return max((self.sum_y2 - self.sum_y**2 / self.n) / (self.n - 1), 0.0)

    @property
    def cost(self) -> float:
        """Mean work units per sample."""
        return self.sum_work / self.n if self.n else math.nan

    @property
    def seconds(self) -> float:
        return self.sum_seconds / self.n if self.n else math.nan

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n >= 2 else math.nan


def optimal_allocation(variances, costs, eps) -> np.ndarray:
    """Sample counts minimising total cost subject to ``sum V_l/N_l = eps**2/2``."""
    V = np.maximum(np.asarray(variances, dtype=float), VARIANCE_FLOOR)
    C = np.asarray(costs, dtype=float)
    if np.any(C <= 0) or eps <= 0:
        raise ValueError("costs and eps must be positive")
    total = np.sum(np.sqrt(V * C))
    return np.ceil(2.0 / eps**2 * np.sqrt(V / C) * total).astype(np.int64)


# -- rates --------------------------------------------------------------------


@dataclass
class RateEstimate:
    """Fitted ``|mean Y_l| ~ C_alpha s**(-alpha l)``, ``V[Y_l] ~ C_beta s**(-beta l)``
    and ``cost_l ~ C_gamma s**(gamma l)``, with the RMS residuals of the
    fits in log_s units."""

    alpha: float
    beta: float
    gamma: float
    C_alpha: float
    C_beta: float
    C_gamma: float
    residuals: dict = field(default_factory=dict)
    levels: tuple = ()


def _loglinear(levels, values, s):
    """Least-squares slope, constant and RMS residual of ``log_s values`` vs level."""
    x = np.asarray(levels, dtype=float)
    y = np.log(np.asarray(values, dtype=float)) / np.log(s)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ np.array([slope, icpt])
    return float(slope), float(s**icpt), float(np.sqrt(np.mean(res**2)))


def _fit_positive(levels, values, s, name):
    levels = np.asarray(levels)
    values = np.abs(np.asarray(values, dtype=float))
    keep = values > 0
    if not keep.all():
        logger.warning("excluding levels %s with zero %s from the rate fit", levels[~keep].tolist(), name)
    if keep.sum() < 2:
        return math.nan, math.nan, math.nan
    return _loglinear(levels[keep], values[keep], s)


def estimate_rates(means, variances, costs, s=2, levels=None, min_levels=3) -> RateEstimate:
    """Fit the decay rates of ``|mean Y_l|`` and ``V[Y_l]`` and the growth rate
    of the cost per sample."""
    means = np.asarray(means, dtype=float)
    if len(means) < min_levels:
        raise ValueError(f"at least {min_levels} levels are needed to fit rates, got {len(means)}")
    levels = np.arange(len(means)) if levels is None else np.asarray(levels)
    a, ca, ra = _fit_positive(levels, means, s, "mean")
    b, cb, rb = _fit_positive(levels, variances, s, "variance")
    g, cg, rg = _fit_positive(levels, costs, s, "cost")
    return RateEstimate(-a, -b, g, ca, cb, cg, {"alpha": ra, "beta": rb, "gamma": rg}, tuple(int(l) for l in levels))


def fit_rate(h, errors) -> tuple[float, float]:
    """Slope and constant of ``log |error|`` against ``log h``."""
    slope, const, _ = _fit_positive(np.log2(1.0 / np.asarray(h, dtype=float)), errors, 2, "error")
    return -slope, const


def fit_rate_reference(h, errors, h_ref) -> tuple[float, float]:
    """Rate and constant of ``|error| = C (h**alpha - h_ref**alpha)``.

    Errors measured against a reference solution on a grid ``h_ref`` miss
    the reference's own error; when ``h_ref / h`` is not small a plain
    log-log fit overestimates the rate.
    """
    h = np.asarray(h, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    keep = e > 0
    if keep.sum() < 2:
        return math.nan, math.nan
    h, e = h[keep], e[keep]
    a0, c0 = fit_rate(h, e)

    def resid(p):
        c, a = np.exp(p[0]), p[1]
        return np.log(c * (h**a - h_ref**a)) - np.log(e)

    sol = scipy.optimize.least_squares(resid, [math.log(c0), a0], bounds=([-np.inf, 1e-3], [np.inf, 10.0]))
    return float(sol.x[1]), float(np.exp(sol.x[0]))


# -- sampling -----------------------------------------------------------------


def _y_batch(problem, level, coupling, seed, namespace, indices):
    out = []
    for i in indices:
        ys = problem.sample_Y(level, rng.SampleStreams(seed, namespace, level, i), coupling)
        out.append((ys.y, ys.work, ys.seconds))
    return out


def _q_batch(problem, level, seed, namespace, indices):
    # single-level samples: Q_l only, no coarse solve
    out = []
    for i in indices:
        t0 = time.perf_counter()
        k = problem.sample_permeability(level, rng.SampleStreams(seed, namespace, level, i))
        q, rep = problem.solve_qoi(k)
        out.append((q, k.work + rep.work, time.perf_counter() - t0))
    return out


class Sampler:
    """Runs batches of samples, optionally on a process pool.

    Batches are split into contiguous chunks of sample indices and the
    results are returned in index order.
    """

    def __init__(self, threads=1):
        self.threads = max(int(threads), 1)
        self._pool = ProcessPoolExecutor(self.threads) if self.threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def run(self, fn, args, start, count):
        """``fn(*args, indices)`` over sample indices ``start .. start+count-1``;
        ``fn`` returns one result per index."""
        if self._pool is None or count < 2 * self.threads:
            return fn(*args, range(start, start + count))
        chunks = np.array_split(np.arange(start, start + count), self.threads * 4)
        futures = [self._pool.submit(fn, *args, c.tolist()) for c in chunks if len(c)]
        return [r for f in futures for r in f.result()]


# -- MLMC ---------------------------------------------------------------------


@dataclass
class MLMCConfig:
    warmup: int = 100
    L_min: int = 3
    L_max: int = 6
    alpha: float | None = None
    beta: float | None = None
    seed: int = 0
    namespace: int = rng.MLMC
    threads: int = 1


@dataclass
class LevelStats:
    level: int
    m: int
    n: int
    mean: float
    variance: float
    cost: float
    seconds: float


@dataclass
class MLMCResult:
    eps: float
    coupling: str
    estimate: float
    levels: list
    sampling_error: float
    bias2: float
    total_cost: float
    total_seconds: float
    rates: RateEstimate | None
    converged: bool = True
    warning: str = ""

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    @property
    def mse_bound(self) -> float:
        return self.sampling_error + self.bias2

    def to_dict(self) -> dict:
        out = asdict(self)
        out["L"] = self.L
        out["mse_bound"] = self.mse_bound
        return out


def bias_estimate(means, s, alpha) -> float:
    """Extrapolated ``|E[Q - Q_L]|`` from the last two level means."""
    m_L = abs(means[-1])
    if len(means) > 2:
        m_L = max(m_L, abs(means[-2]) / s**alpha)
    return m_L / (s**alpha - 1.0)


def _level_rates(accs, s, cfg):
    # Y_0 = Q_0 is not a difference, so rates are fitted from level 1 on
    sub = accs[1:]
    if len(sub) >= 2:
        r = estimate_rates([a.mean for a in sub], [a.variance for a in sub], [a.cost for a in sub], s, [a.level for a in sub], min_levels=2)
    else:
        r = RateEstimate(math.nan, math.nan, math.nan, math.nan, math.nan, math.nan)
    alpha = cfg.alpha if cfg.alpha is not None else r.alpha
    beta = cfg.beta if cfg.beta is not None else r.beta
    alpha = 0.5 if not np.isfinite(alpha) else max(alpha, 0.5)
    beta = 0.5 if not np.isfinite(beta) else max(beta, 0.5)
    return r, alpha, beta


def mlmc_run(problem: DarcyProblem, eps: float, coupling=STANDARD, config: MLMCConfig | None = None, sampler: Sampler | None = None) -> MLMCResult:
    """Adaptive MLMC estimate of ``E[Q]`` with root mean square error about ``eps``."""
    cfg = config or MLMCConfig()
    if eps <= 0:
        raise ValueError("eps must be positive")
    own = sampler is None
    sampler = sampler or Sampler(cfg.threads)
    s = problem.s
    t0 = time.perf_counter()
    L = cfg.L_min
    accs = [LevelAccumulator(l) for l in range(L + 1)]
    dN = np.full(L + 1, cfg.warmup, dtype=np.int64)
    converged, warning = True, ""
    try:
        while True:
            for l, n in enumerate(dN):
                if n > 0:
                    batch = sampler.run(_y_batch, (problem, l, coupling, cfg.seed, cfg.namespace), accs[l].n, int(n))
                    for y, w, t in batch:
                        accs[l].add(y, w, t)
            V = np.array([a.variance for a in accs])
            C = np.array([a.cost for a in accs])
            _, alpha, _ = _level_rates(accs, s, cfg)
            N = optimal_allocation(V, C, eps)
            dN = np.maximum(N - np.array([a.n for a in accs]), 0)
            if dN.any():
                continue
            bias = bias_estimate([a.mean for a in accs], s, alpha)
            logger.info("L=%d bias estimate %.3e (alpha %.2f)", L, bias, alpha)
            if bias**2 <= eps**2 / 2:
                break
            if L >= cfg.L_max:
                converged = False
                warning = f"level budget exhausted at L={L}; bias estimate {bias:.3e} exceeds eps/sqrt(2)"
                logger.warning(warning)
                break
            L += 1
            accs.append(LevelAccumulator(L))
            dN = np.append(dN, cfg.warmup)
    finally:
        if own:
            sampler.close()
    rates, alpha, _ = _level_rates(accs, s, cfg)
    levels = [LevelStats(a.level, problem.grid(a.level).m, a.n, a.mean, a.variance, a.cost, a.seconds) for a in accs]
    estimate = float(sum(a.mean for a in accs))
    sampling = float(sum(max(a.variance, 0.0) / a.n for a in accs))
    bias2 = float(bias_estimate([a.mean for a in accs], s, alpha) ** 2)
    total_cost = float(sum(a.sum_work for a in accs))
    return MLMCResult(eps, coupling, estimate, levels, sampling, bias2, total_cost, time.perf_counter() - t0, rates, converged, warning)


# -- plain MC -----------------------------------------------------------------


@dataclass
class MCResult:
    eps: float
    level: int
    m: int
    n: int
    estimate: float
    variance: float
    total_cost: float
    total_seconds: float

    @property
    def sampling_error(self) -> float:
        return self.variance / self.n

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sampling_error"] = self.sampling_error
        return out


def select_level(problem: DarcyProblem, eps, warmup=100, seed=0, L_min=3, L_max=6, sampler=None) -> int:
    """Smallest level whose extrapolated bias squared is at most ``eps**2/2``,
    from pilot samples of the level differences."""
    sampler = sampler or Sampler()
    cfg = MLMCConfig(warmup=warmup, seed=seed, namespace=rng.MC)
    accs = []
    for l in range(L_max + 1):
        acc = LevelAccumulator(l)
        for y, w, t in sampler.run(_y_batch, (problem, l, STANDARD, seed, rng.REFERENCE), 0, warmup):
            acc.add(y, w, t)
        accs.append(acc)
        if l >= L_min:
            _, alpha, _ = _level_rates(accs, problem.s, cfg)
            if bias_estimate([a.mean for a in accs], problem.s, alpha) ** 2 <= eps**2 / 2:
                return l
    logger.warning("no level up to %d meets the bias target", L_max)
    return L_max


def mc_run(problem: DarcyProblem, eps: float, L: int | None = None, warmup=100, seed=0, threads=1, sampler=None) -> MCResult:
    """Single-level MC on level ``L`` with ``N >= 2 V_L / eps**2`` samples,
    ``V_L`` being the running sample variance."""
    own = sampler is None
    sampler = sampler or Sampler(threads)
    t0 = time.perf_counter()
    try:
        if L is None:
            L = select_level(problem, eps, warmup, seed, sampler=sampler)
        acc = LevelAccumulator(L)
        for q, w, t in sampler.run(_q_batch, (problem, L, seed, rng.MC), 0, warmup):
            acc.add(q, w, t)
        # re-target with the updated variance until the sample count suffices
        while (extra := int(math.ceil(2.0 * max(acc.variance, VARIANCE_FLOOR) / eps**2)) - acc.n) > 0:
            for q, w, t in sampler.run(_q_batch, (problem, L, seed, rng.MC), acc.n, extra):
                acc.add(q, w, t)
    finally:
        if own:
            sampler.close()
    return MCResult(eps, L, problem.grid(L).m, acc.n, acc.mean, acc.variance, acc.sum_work, time.perf_counter() - t0)


# -- output -------------------------------------------------------------------

LEVEL_COLUMNS = ("level", "m", "h", "N", "mean_Y", "var_Y", "cost_work", "cost_seconds")


def write_levels_csv(path, result: MLMCResult, header: dict | None = None):
    """Per-level table; ``header`` items are written as ``# key: value`` lines."""
    with open(path, "w") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(LEVEL_COLUMNS) + "\n")
        for s in result.levels:
            fh.write(f"{s.level},{s.m},{1.0 / s.m!r},{s.n},{s.mean!r},{s.variance!r},{s.cost!r},{s.seconds!r}\n")
