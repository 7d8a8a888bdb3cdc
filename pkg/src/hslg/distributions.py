"""Parameter record and the elementary laws of the model.

* inverse-gamma weights, drawn in log space as ``-log Gamma(shape)``
* ``f_theta``: law of ``log A - log B`` for independent Gamma(theta) A, B
* ``g_alpha``: law of ``log G`` for G ~ Gamma(alpha)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from .rng import RngStream, log_gamma_variate, uniform


class ParameterError(ValueError):
    """Parameters outside the domain where a quantity is defined."""


@dataclass(frozen=True)
class PolymerParams:
    """Bulk parameter ``theta > 0`` and boundary parameter ``alpha > -theta``.

    The polymer itself is defined for every ``alpha > -theta``; the limiting
    two-layer chain only exists in the unbound phase ``alpha > 0``.
    """

    theta: float
    alpha: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not (np.isfinite(self.alpha) and self.alpha > -self.theta):
            raise ParameterError(f"alpha must exceed -theta, got {self.alpha}")

    @property
    def unbound(self) -> bool:
        return self.alpha > 0

    def require_unbound(self) -> None:
        if not self.unbound:
            raise ParameterError(
                f"the limiting chain needs alpha > 0 (got alpha={self.alpha})"
            )

    @property
    def bulk_shape(self) -> float:
        return 2.0 * self.theta

    @property
    def diagonal_shape(self) -> float:
        return self.alpha + self.theta

    @property
    def increment_variance(self) -> float:
        """Variance of one f_theta increment."""
        return 2.0 * trigamma(self.theta)

    @property
    def sigma2(self) -> float:
        """Diffusive variance of the gap S1 - S2 between two walks."""
        return 4.0 * trigamma(self.theta)


def digamma(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterError("digamma is only provided on x > 0")
    return special.psi(x)


def trigamma(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterError("trigamma is only provided on x > 0")
    out = special.polygamma(1, x)
    return float(out) if out.ndim == 0 else out


@njit(cache=True)
def f_theta_variate(state, theta):
    if theta == 1.0:
        # f_1 is the logistic law
        u = uniform(state)
        return np.log(u) - np.log1p(-u)
    a = log_gamma_variate(state, theta)
    b = log_gamma_variate(state, theta)
    return a - b


@njit(cache=True)
def _fill_f(state, theta, out):
    for i in range(out.size):
        out[i] = f_theta_variate(state, theta)


def _size(size):
    return None if size is None else int(size)


def _check_shape(shape: float) -> float:
    if not shape > 0 or not math.isfinite(shape):
        raise ParameterError(f"gamma shape must be positive and finite, got {shape}")
    return float(shape)


def sample_log_gamma(shape: float, rng: RngStream, size: int | None = None):
    """``log G`` with ``G ~ Gamma(shape, 1)``; this is also g_alpha sampling."""
    return rng.log_gamma(_check_shape(shape), _size(size))


def sample_gamma(shape: float, rng: RngStream, size: int | None = None):
    return rng.gamma(_check_shape(shape), _size(size))


def sample_log_inv_gamma(shape: float, rng: RngStream, size: int | None = None):
    """``log W`` for ``W ~ Gamma^{-1}(shape)``."""
    x = rng.log_gamma(_check_shape(shape), _size(size))
    return -x


def sample_g_alpha(alpha: float, rng: RngStream, size: int | None = None):
    if not alpha > 0:
        raise ParameterError("g_alpha needs alpha > 0")
    return rng.log_gamma(alpha, _size(size))


def sample_f_theta(theta: float, rng: RngStream, size: int | None = None):
    if not theta > 0:
        raise ParameterError("f_theta needs theta > 0")
    if size is None:
        return float(f_theta_variate(rng.state, float(theta)))
    out = np.empty(int(size))
    _fill_f(rng.state, float(theta), out)
    return out


def log_density_f_theta(x, theta: float):
    """Stable log of ``Gamma(2t)/Gamma(t)^2 (e^{-x/2} + e^{x/2})^{-2t}``.

    Written in terms of ``|x|`` so the density is exactly symmetric.
    """
    if not theta > 0:
        raise ParameterError("f_theta needs theta > 0")
    ax = np.abs(np.asarray(x, dtype=float))
    c = special.gammaln(2 * theta) - 2 * special.gammaln(theta)
    return c - 2 * theta * (0.5 * ax + np.log1p(np.exp(-ax)))


def density_f_theta(x, theta: float):
    return np.exp(log_density_f_theta(x, theta))


def log_density_g_alpha(x, alpha: float):
    if not alpha > 0:
        raise ParameterError("g_alpha needs alpha > 0")
    x = np.asarray(x, dtype=float)
    return alpha * x - np.exp(x) - special.gammaln(alpha)


def density_g_alpha(x, alpha: float):
    return np.exp(log_density_g_alpha(x, alpha))


def log_gamma_mean_var(shape: float) -> tuple[float, float]:
    """Mean and variance of ``log G`` for ``G ~ Gamma(shape)``."""
    return float(digamma(shape)), float(trigamma(shape))
