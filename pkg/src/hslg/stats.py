"""Weighted empirical distributions and the test statistics used by the
acceptance experiments."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps


def ess(weights) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if s <= 0:
        return 0.0
    return float(s * s / np.dot(w, w))


class EmpiricalDistribution:
    """Sorted sample with normalized non-negative weights."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty sample")
        if weights is None:
            w = np.ones(values.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape != values.shape:
                raise ValueError("weights and values differ in length")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and non-negative")
        keep = np.isfinite(values)
        values, w = values[keep], w[keep]
        if w.sum() <= 0:
            raise ValueError("total weight is zero")
        order = np.argsort(values, kind="stable")
        self.values = values[order]
        self.ess = ess(w)
        self.weights = w[order] / w.sum()
        self._cum = np.cumsum(self.weights)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_log_weights(cls, values, log_weights) -> "EmpiricalDistribution":
        lw = np.asarray(log_weights, dtype=float)
        return cls(values, np.exp(lw - np.max(lw)))

    def cdf(self, x):
        """Right-continuous weighted ECDF."""
        idx = np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")
        cum = np.concatenate([[0.0], self._cum])
        return np.minimum(cum[idx], 1.0)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def quantile(self, q):
        idx = np.searchsorted(self._cum, np.asarray(q, dtype=float), side="left")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def resample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        idx = np.searchsorted(self._cum, rng.random(size) * self._cum[-1], side="right")
        return self.values[np.minimum(idx, self.values.size - 1)]


def _as_dist(d) -> EmpiricalDistribution:
    return d if isinstance(d, EmpiricalDistribution) else EmpiricalDistribution(d)


def ks_critical(n1: float, n2: float | None = None, level: float = 0.05) -> float:
    """Asymptotic KS critical value ``c(level) sqrt((n1+n2)/(n1 n2))``."""
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    if n2 is None:
        return c / math.sqrt(n1)
    return c * math.sqrt((n1 + n2) / (n1 * n2))


@dataclass
class KSResult:
    statistic: float
    critical: float
    passed: bool
    ess1: float
    ess2: float | None = None

    def __iter__(self):
        return iter((self.statistic, self.passed))


def ks_statistic(d1, d2) -> float:
    d1, d2 = _as_dist(d1), _as_dist(d2)
    grid = np.union1d(d1.values, d2.values)
    return float(np.max(np.abs(d1.cdf(grid) - d2.cdf(grid))))


def ks_two_sample(d1, d2, level: float = 0.05) -> KSResult:
    """Sup distance of weighted ECDFs; sample sizes replaced by ESS."""
    d1, d2 = _as_dist(d1), _as_dist(d2)
    stat = ks_statistic(d1, d2)
    crit = ks_critical(d1.ess, d2.ess, level)
    return KSResult(stat, crit, stat <= crit, d1.ess, d2.ess)


def ks_vs_cdf(d, cdf) -> float:
    """Sup distance between a (weighted) ECDF and a continuous CDF."""
    d = _as_dist(d)
    # one jump per distinct value so that ties are handled correctly
    x, first = np.unique(d.values, return_index=True)
    cum = np.concatenate([[0.0], d._cum])
    last = np.append(first[1:], d.values.size)
    upper, lower = np.minimum(cum[last], 1.0), cum[first]
    F = np.asarray(cdf(x), dtype=float)
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))


def wasserstein1(d1, d2) -> float:
    d1, d2 = _as_dist(d1), _as_dist(d2)
    return float(sps.wasserstein_distance(d1.values, d2.values, d1.weights, d2.weights))


def bootstrap_ci(d, functional, level: float = 0.95, n_boot: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap; resamples according to the weights."""
    d = _as_dist(d)
    rng = np.random.default_rng(seed)
    n = d.values.size
    stats_ = np.empty(n_boot)
    for b in range(n_boot):
        stats_[b] = functional(d.resample(n, rng))
    lo, hi = np.quantile(stats_, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


@dataclass
class Verdict:
    test_id: str
    statistic: float
    threshold: float
    passed: bool
    ess: float | None
    seed: int | None
    detail: dict | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        if out["detail"] is None:
            out.pop("detail")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=json_default)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{self.test_id} {tag} statistic={self.statistic:.6g} threshold={self.threshold:.6g}"


def json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def split_rhat(chains) -> float:
    """Split-R-hat for an array of shape (chains, draws)."""
    x = np.asarray(chains, dtype=float)
    m, n = x.shape
    half = n // 2
    if half < 2:
        return float("nan")
    parts = np.concatenate([x[:, :half], x[:, half:2 * half]], axis=0)
    means = parts.mean(axis=1)
    B = half * means.var(ddof=1)
    W = parts.var(axis=1, ddof=1).mean()
    if W == 0:
        return 1.0
    var = (half - 1) / half * W + B / half
    return float(math.sqrt(var / W))
