"""Two independent f_theta walks, their soft non-intersection weights, and
importance-sampling estimators built on them.

With 1-based positions the weights are

    log W_n       = -e^{S2(1)-S1(2)} - sum_{k=2}^{n-1} (e^{S2(k)-S1(k+1)} + e^{S2(k)-S1(k)})
    log What_r    = -sum_{k=1}^{r-1} (e^{S2(k)-S1(k+1)} + e^{S2(k+1)-S1(k+1)})
    log W_{r->n}  = -e^{S2(r)-S1(r+1)} - sum_{k=r+1}^{n-1} (...same as W_n...)

so that ``W_n = What_r * W_{r->n}``.  The per-path functions round every
term to a fixed-point lattice whose mesh is set by the size of the full
log W_n sum (50 bits below its leading bit), so all partial sums are exact and
the decomposition holds bit for bit.  Batch kernels use plain sums.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .distributions import ParameterError, f_theta_variate, log_density_g_alpha
from .rng import RngStream, log_gamma_variate, new_state, uniform

QUANTUM = 2.0 ** -60
QUANTUM_BITS = 50

DIRAC, GALPHA, TABLE = 0, 1, 2


@dataclass(frozen=True)
class InitCondition:
    """Law of a walk's first position.

    Use the constructors ``dirac``, ``g_alpha`` and ``table``.
    """

    kind: int
    a: float = 0.0
    grid: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cdf: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    tail_rate: float = np.inf

    @classmethod
    def dirac(cls, a: float) -> "InitCondition":
        if not np.isfinite(a):
            raise ValueError("Dirac location must be finite")
        return cls(DIRAC, float(a))

    @classmethod
    def g_alpha(cls, alpha: float) -> "InitCondition":
        if not alpha > 0:
            raise ValueError("DensityGAlpha requires alpha > 0")
        return cls(GALPHA, float(alpha))

    @classmethod
    def table(cls, grid, values, tail_rate: float) -> "InitCondition":
        """Tabulated density; must satisfy ``h(x) <= M exp(-|x|/M)``."""
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be matching 1-d arrays")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be increasing")
        if np.any(values < 0):
            raise ValueError("density values must be non-negative")
        M = float(tail_rate)
        if not M > 0 or np.any(values > M * np.exp(-np.abs(grid) / M) * (1 + 1e-12)):
            raise ValueError("density violates the tail bound h(x) <= M exp(-|x|/M)")
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(grid))])
        if cdf[-1] <= 0:
            raise ValueError("density has zero mass")
        return cls(TABLE, 0.0, grid, cdf / cdf[-1], M)

    def log_density(self, x):
        if self.kind == GALPHA:
            return log_density_g_alpha(x, self.a)
        raise ValueError("log_density only defined for g_alpha")


@dataclass
class TwoWalkPath:
    s1: np.ndarray
    s2: np.ndarray
    log_weight: float = 0.0

    def __post_init__(self) -> None:
        self.s1 = np.asarray(self.s1, dtype=float)
        self.s2 = np.asarray(self.s2, dtype=float)
        if self.s1.ndim != 1 or self.s1.shape != self.s2.shape or self.s1.size < 1:
            raise ValueError("s1 and s2 must be 1-d arrays of equal length n >= 1")

    @property
    def n(self) -> int:
        return self.s1.size


@njit(cache=True)
def draw_ic(state, kind, a, grid, cdf):
    if kind == 0:
        return a
    if kind == 1:
        return log_gamma_variate(state, a)
    u = uniform(state)
    j = np.searchsorted(cdf, u)
    if j <= 0:
        return grid[0]
    if j >= cdf.size:
        return grid[-1]
    w = (u - cdf[j - 1]) / (cdf[j] - cdf[j - 1])
    return grid[j - 1] + w * (grid[j] - grid[j - 1])


@njit(cache=True)
def gen_paths(state, n, theta, ic1, ic2, s1, s2):
    """Fill ``s1``/``s2`` with one free draw (S1 first, then S2)."""
    s1[0] = draw_ic(state, ic1[0], ic1[1], ic1[2], ic1[3])
    for k in range(1, n):
        s1[k] = s1[k - 1] + f_theta_variate(state, theta)
    s2[0] = draw_ic(state, ic2[0], ic2[1], ic2[2], ic2[3])
    for k in range(1, n):
        s2[k] = s2[k - 1] + f_theta_variate(state, theta)


@njit(cache=True)
def lambda_sum(s1, s2, lo, hi):
    """sum of e^{S2(k)-S1(k+1)} + e^{S2(k)-S1(k)} over 0-based k in [lo, hi),
    with the k = lo same-time term omitted when ``lo == 0``."""
    tot = 0.0
    for k in range(lo, hi):
        tot += np.exp(s2[k] - s1[k + 1])
        if k > 0:
            tot += np.exp(s2[k] - s1[k])
    return tot


def _pack(ic: InitCondition):
    return (ic.kind, ic.a, ic.grid, ic.cdf)


def replica_base(rng: RngStream) -> tuple[np.uint64, np.uint64]:
    """Replica i of a batch draws from stream ``(rng.seed, rng.stream_id + i)``."""
    return np.uint64(rng.seed), np.uint64(rng.stream_id)


def sample_free(n: int, h1: InitCondition, h2: InitCondition, theta: float, rng: RngStream) -> TwoWalkPath:
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not theta > 0:
        raise ParameterError("theta must be positive")
    s1 = np.empty(n)
    s2 = np.empty(n)
    gen_paths(rng.state, n, float(theta), _pack(h1), _pack(h2), s1, s2)
    return TwoWalkPath(s1, s2, 0.0)


def _quantum(path: "TwoWalkPath") -> float:
    """Grid for fixed-point accumulation, chosen from the full path so that
    every partial sum of log W_n terms is an exact multiple below 2**53."""
    total = math.fsum(_w_terms(path.s1, path.s2, 1, path.n)) if path.n >= 2 else 0.0
    if not math.isfinite(total):
        return math.inf
    if total <= 0.0:
        return QUANTUM
    return math.ldexp(1.0, math.frexp(total)[1] - QUANTUM_BITS)


def _qsum(terms, q: float) -> float:
    if math.isinf(q):
        return math.inf
    tot = 0.0
    for t in terms:
        tot += np.rint(t / q) * q
    return tot


def _w_terms(s1, s2, r, n):
    """Terms of log W_{r->n} (1-based r)."""
    yield math.exp(s2[r - 1] - s1[r])
    for k in range(r + 1, n):
        yield math.exp(s2[k - 1] - s1[k])
        yield math.exp(s2[k - 1] - s1[k - 1])


def log_W(path: TwoWalkPath) -> float:
    if path.n < 2:
        raise ParameterError("W_n needs n >= 2")
    return -_qsum(_w_terms(path.s1, path.s2, 1, path.n), _quantum(path))


def log_W_split(path: TwoWalkPath, r: int) -> float:
    if not 1 <= r < path.n:
        raise ParameterError(f"split index r={r} outside [1, {path.n - 1}]")
    return -_qsum(_w_terms(path.s1, path.s2, r, path.n), _quantum(path))


def log_W_hat(path: TwoWalkPath, r: int) -> float:
    if not 1 <= r <= path.n:
        raise ParameterError(f"index r={r} outside [1, {path.n}]")
    s1, s2 = path.s1, path.s2

    def terms():
        for k in range(1, r):
            yield math.exp(s2[k - 1] - s1[k])
            yield math.exp(s2[k] - s1[k])

    return -_qsum(terms(), _quantum(path))


@njit(cache=True)
def _logw_batch(n, theta, ic1, ic2, seed, base, R, obs):
    logw = np.empty(R)
    o1 = np.empty((R, obs.size))
    o2 = np.empty((R, obs.size))
    s1 = np.empty(n)
    s2 = np.empty(n)
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        gen_paths(state, n, theta, ic1, ic2, s1, s2)
        logw[i] = -lambda_sum(s1, s2, 0, n - 1)
        for j in range(obs.size):
            o1[i, j] = s1[obs[j]]
            o2[i, j] = s2[obs[j]]
    return logw, o1, o2


@njit(cache=True)
def _ni_batch(n, theta, a1, a2, seed, base, R):
    hits = 0
    s1 = np.empty(n)
    s2 = np.empty(n)
    ic1 = (0, a1, np.zeros(2), np.zeros(2))
    ic2 = (0, a2, np.zeros(2), np.zeros(2))
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        gen_paths(state, n, theta, ic1, ic2, s1, s2)
        ok = True
        for k in range(1, n - 1):
            if s1[k] - s2[k] < 0:
                ok = False
                break
        if ok:
            hits += 1
    return hits


@dataclass
class SoftSample:
    """Free draws with log importance weights ``log W_n``.

    ``obs`` lists 0-based positions retained; ``s1``/``s2`` are (reps, len(obs)).
    """

    n: int
    obs: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def ess(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w)) if w.sum() > 0 else 0.0

    @property
    def low_ess(self) -> bool:
        return self.ess < 50

    def column(self, position: int, walk: int = 1) -> np.ndarray:
        j = int(np.flatnonzero(self.obs == position)[0])
        return (self.s1 if walk == 1 else self.s2)[:, j]

    def mean(self, values) -> tuple[float, float]:
        """Self-normalized weighted mean and delta-method standard error."""
        values = np.asarray(values, dtype=float)
        w = self.weights
        W = w.sum()
        mu = float(np.sum(w * values) / W)
        se = float(np.sqrt(np.sum((w * (values - mu)) ** 2)) / W)
        return mu, se


def soft_free_sample(
    n: int,
    h1: InitCondition,
    h2: InitCondition,
    theta: float,
    reps: int,
    rng: RngStream,
    observe=None,
) -> SoftSample:
    """Free draws weighted by ``W_n``; ``observe`` defaults to every position."""
    if reps < 1 or n < 2:
        raise ParameterError("need reps >= 1 and n >= 2")
    obs = np.arange(n) if observe is None else np.asarray(observe, dtype=np.int64)
    if obs.size and (obs.min() < 0 or obs.max() >= n):
        raise ParameterError("observed positions out of range")
    seed, base = replica_base(rng)
    logw, o1, o2 = _logw_batch(n, float(theta), _pack(h1), _pack(h2), seed, base, int(reps), obs)
    out = SoftSample(n, obs, o1, o2, logw)
    if out.low_ess:
        warnings.warn(f"effective sample size {out.ess:.1f} below 50", RuntimeWarning)
    return out


def estimate_EW(
    n: int, h1: InitCondition, h2: InitCondition, theta: float, reps: int, rng: RngStream
) -> tuple[float, float]:
    """Plain Monte Carlo mean of ``W_n`` over free draws, with standard error."""
    if reps < 100:
        raise ParameterError("reps must be at least 100")
    seed, base = replica_base(rng)
    logw, _, _ = _logw_batch(n, float(theta), _pack(h1), _pack(h2), seed, base, int(reps),
                             np.zeros(0, dtype=np.int64))
    w = np.exp(logw)
    return float(w.mean()), float(w.std(ddof=1) / np.sqrt(reps))


def nonintersect_prob(n: int, a1: float, a2: float, theta: float, reps: int, rng: RngStream) -> tuple[float, float]:
    """P(S1(k) >= S2(k) for 2 <= k <= n-1) from Dirac starts."""
    if reps < 1000:
        raise ParameterError("reps must be at least 1000")
    if n < 2:
        raise ParameterError("n must be at least 2")
    seed, base = replica_base(rng)
    hits = _ni_batch(int(n), float(theta), float(a1), float(a2), seed, base, int(reps))
    p = hits / reps
    return p, math.sqrt(max(p * (1 - p), 0.0) / reps)


@dataclass
class DiffusiveReport:
    n: int
    z: float
    sigma2: float
    times: list
    ks: list
    ess: float
    sample: SoftSample = field(repr=False)


def diffusive_positions(n: int, times) -> np.ndarray:
    """0-based walk positions used for the rescaled times t (t=0 is the start)."""
    return np.array([int(round(t * (n - 1))) for t in times], dtype=np.int64)


def diffusive_check(n: int, x_n: float, y_n: float, theta: float, reps: int, rng: RngStream,
                    times=(0.25, 0.5, 1.0)) -> DiffusiveReport:
    """Compare the soft-conditioned gap ``(S1 - S2)/sqrt(n)`` with the
    positivity-conditioned Brownian marginal started at ``z = (x_n - y_n)/sqrt(n)``."""
    from . import oracles
    from .stats import EmpiricalDistribution, ks_vs_cdf
    from .distributions import trigamma

    z = (x_n - y_n) / math.sqrt(n)
    if z <= 0:
        raise ParameterError("the starting gap x_n - y_n must be positive")
    if x_n - y_n < 1.0:
        warnings.warn("gap below n^{-1/2}: conditioning nearly singular", RuntimeWarning)
    sigma2 = 4.0 * trigamma(theta)
    pos = diffusive_positions(n, times)
    sample = soft_free_sample(n, InitCondition.dirac(x_n), InitCondition.dirac(y_n), theta, reps, rng,
                              observe=pos)
    ks = []
    for j, t in enumerate(times):
        u = (sample.s1[:, j] - sample.s2[:, j]) / math.sqrt(n)
        d = EmpiricalDistribution(u, sample.weights)
        if t == 0:
            # the reference is a point mass at z
            ks.append(float(max(d.weights[d.values < z].sum(), d.weights[d.values > z].sum())))
        else:
            ks.append(ks_vs_cdf(d, oracles.conditioned_bm_cdf(z, sigma2, t)))
    return DiffusiveReport(n, z, sigma2, list(times), ks, sample.ess, sample)
