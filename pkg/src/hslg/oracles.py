"""Independent reference computations used to check the simulators.

Nothing here shares code with the samplers: path sums enumerate paths
explicitly, and laws are integrated numerically from their densities.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .distributions import log_density_f_theta, log_density_g_alpha


def up_right_paths(m: int, n: int):
    """All up-right lattice paths from (1, 1) to (m, n) inside ``j <= i``."""
    if not 1 <= n <= m:
        return
    path = [(1, 1)]

    def rec(i, j):
        if (i, j) == (m, n):
            yield list(path)
            return
        if i < m:
            path.append((i + 1, j))
            yield from rec(i + 1, j)
            path.pop()
        if j < n and j + 1 <= i:
            path.append((i, j + 1))
            yield from rec(i, j + 1)
            path.pop()

    yield from rec(1, 1)


def brute_force_log_partition(logw: np.ndarray, m: int, n: int) -> float:
    """log of the sum over paths of the product of weights, in linear space."""
    total = math.fsum(
        math.prod(math.exp(logw[i, j]) for i, j in p) for p in up_right_paths(m, n)
    )
    return math.log(total)


def simpson_cdf_table(logpdf, lo: float, hi: float, h: float = 2e-3):
    """Cumulative integral of ``exp(logpdf)`` on a grid by composite Simpson.

    Returns ``(grid, cdf)``; the cdf is *not* renormalized, so its last value
    doubles as a normalization check.
    """
    n = int(math.ceil((hi - lo) / h))
    grid = lo + h * np.arange(n + 1)
    mid = grid[:-1] + 0.5 * h
    f = np.exp(logpdf(grid))
    fm = np.exp(logpdf(mid))
    cells = h / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
    return grid, np.concatenate([[0.0], np.cumsum(cells)])


def cdf_from_table(grid, cdf, left: float = 0.0, right: float = 1.0):
    def F(x):
        return np.interp(np.asarray(x, dtype=float), grid, cdf, left=left, right=right)

    return F


@lru_cache(maxsize=32)
def f_theta_cdf(theta: float, lo: float = -80.0, hi: float = 80.0):
    grid, cdf = simpson_cdf_table(lambda x: log_density_f_theta(x, theta), lo, hi)
    return cdf_from_table(grid, cdf)


@lru_cache(maxsize=32)
def g_alpha_cdf(alpha: float, lo: float = -60.0, hi: float = 6.0):
    grid, cdf = simpson_cdf_table(lambda x: log_density_g_alpha(x, alpha), lo, hi)
    return cdf_from_table(grid, cdf)


def quad(f, a: float, b: float, **kw) -> float:
    val, _ = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-10, limit=400, **kw)
    return float(val)


def rayleigh_cdf(sigma2: float):
    """Endpoint law of a Brownian meander with diffusion constant sigma2."""

    def F(x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-x * x / (2.0 * sigma2))

    return F


def conditioned_bm_logpdf(z: float, sigma2: float, t: float):
    """Unnormalized log-density at time t of Brownian motion from z > 0 with
    variance sigma2, conditioned to stay positive on [0, 1] (reflection
    principle for the killed density times the survival of the remainder)."""
    s = math.sqrt(sigma2 * t)

    def logp(x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 1e-300)
        # phi(x - z) - phi(x + z) = phi(x - z) (1 - exp(-2 x z / s^2))
        killed = -0.5 * ((x - z) / s) ** 2 + np.log(-np.expm1(-2.0 * xp * z / s ** 2))
        if t < 1.0:
            surv = np.log(np.maximum(special.erf(xp / math.sqrt(2.0 * sigma2 * (1.0 - t))), 1e-300))
        else:
            surv = 0.0
        out = killed + surv
        return np.where(x > 0, out, -np.inf)

    return logp


def conditioned_bm_cdf(z: float, sigma2: float, t: float):
    logp = conditioned_bm_logpdf(z, sigma2, t)
    hi = z + 12.0 * math.sqrt(sigma2) + 1.0
    grid, cdf = simpson_cdf_table(logp, 0.0, hi, h=hi / 20000)
    return cdf_from_table(grid, cdf / cdf[-1])


def normal_cdf(mu: float, sigma2: float):
    def F(x):
        return special.ndtr((np.asarray(x, dtype=float) - mu) / math.sqrt(sigma2))

    return F


def sigma2_by_quadrature(theta: float) -> float:
    """Second moment of f_theta * f_theta, i.e. twice the increment variance."""
    v = quad(lambda x: x * x * math.exp(log_density_f_theta(x, theta)), -np.inf, np.inf)
    return 2.0 * v
