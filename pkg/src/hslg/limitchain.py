"""The limiting two-layer chain (S1up, S2up).

Two samplers are provided and are meant to be checked against each other:

* ``sample_lg_prefix``: free walks from (Dirac(0), g_alpha) of length r,
  weighted by ``What_r * V(S2(r) - S1(r))``;
* ``sample_sequential_pv``: S2up(1) from ``p0V = V g_alpha`` by inverse CDF,
  then each step from ``pV`` by rejection against f_theta x f_theta proposals.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .distributions import (
    ParameterError,
    f_theta_variate,
    log_density_f_theta,
    log_density_g_alpha,
)
from .rng import RngStream, log_gamma_variate, new_state, uniform
from .vfunction import VTable, v_eval, v_interpolate

MAX_REJECTIONS = 10_000
ENVELOPE_TAIL = 30.0


class SamplerError(RuntimeError):
    pass


@dataclass
class ChainSample:
    """``reps`` prefixes of length r.  ``log_weights`` is None for unweighted draws."""

    s1: np.ndarray
    s2: np.ndarray
    provenance: str
    log_weights: np.ndarray | None = None
    ess: float | None = None
    diagnostics: dict | None = None

    @property
    def r(self) -> int:
        return self.s1.shape[1]

    @property
    def weights(self) -> np.ndarray:
        if self.log_weights is None:
            return np.ones(self.s1.shape[0])
        lw = self.log_weights
        return np.exp(lw - lw.max())

    def rows(self):
        """(replica, k, s1up, s2up, log_weight) records, k 1-based."""
        lw = self.log_weights if self.log_weights is not None else np.zeros(self.s1.shape[0])
        for i in range(self.s1.shape[0]):
            for k in range(self.r):
                yield i, k + 1, self.s1[i, k], self.s2[i, k], lw[i]


def _check(table: VTable, theta: float, alpha: float) -> None:
    if not table.accepted:
        raise ParameterError("V table was not accepted")
    if not alpha > 0:
        raise ParameterError("the limiting chain needs alpha > 0")
    if abs(table.theta - theta) > 1e-12 or abs(table.alpha - alpha) > 1e-12:
        raise ParameterError("V table was built for different parameters")


def eval_p0V(y, table: VTable, alpha: float):
    """``V(y) g_alpha(y)``."""
    return v_interpolate(table, y) * np.exp(log_density_g_alpha(y, alpha))


def eval_pV(state1, state2, table: VTable, theta: float):
    """Transition density from (x1, y1) to (x2, y2)."""
    x1, y1 = (np.asarray(a, dtype=float) for a in state1)
    x2, y2 = (np.asarray(a, dtype=float) for a in state2)
    ratio = v_interpolate(table, y2 - x2) / v_interpolate(table, y1 - x1)
    ff = np.exp(log_density_f_theta(x2 - x1, theta) + log_density_f_theta(y2 - y1, theta))
    kill = np.exp(-np.exp(y1 - x2) - np.exp(y2 - x2))
    return ratio * ff * kill


@njit(cache=True)
def _lg_paths(r, theta, alpha, seed, base, R):
    s1 = np.empty((R, r))
    s2 = np.empty((R, r))
    logwhat = np.empty(R)
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        s1[i, 0] = 0.0
        for k in range(1, r):
            s1[i, k] = s1[i, k - 1] + f_theta_variate(state, theta)
        s2[i, 0] = log_gamma_variate(state, alpha)
        for k in range(1, r):
            s2[i, k] = s2[i, k - 1] + f_theta_variate(state, theta)
        tot = 0.0
        for k in range(r - 1):
            tot += np.exp(s2[i, k] - s1[i, k + 1]) + np.exp(s2[i, k + 1] - s1[i, k + 1])
        logwhat[i] = -tot
    return s1, s2, logwhat


def systematic_resample(weights, u: float) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    c = np.cumsum(w / w.sum())
    c[-1] = 1.0
    pos = (u + np.arange(w.size)) / w.size
    return np.searchsorted(c, pos, side="left")


def sample_lg_prefix(r: int, table: VTable, theta: float, alpha: float, reps: int,
                     rng: RngStream, resample: bool = False) -> ChainSample:
    """Importance-weighted prefixes; ``log_weights`` are the raw (unnormalized)
    ``log What_r + log V(S2(r) - S1(r))``."""
    _check(table, theta, alpha)
    if r < 1:
        raise ParameterError("r must be positive")
    s1, s2, logwhat = _lg_paths(int(r), float(theta), float(alpha), np.uint64(rng.seed),
                                np.uint64(rng.stream_id), int(reps))
    v = v_interpolate(table, s2[:, -1] - s1[:, -1])
    with np.errstate(divide="ignore"):
        logw = logwhat + np.log(v)
    w = np.exp(logw)
    ess = float(w.sum() ** 2 / np.dot(w, w)) if w.sum() > 0 else 0.0
    diag = {"mean_weight": float(w.mean()), "mean_weight_se": float(w.std(ddof=1) / math.sqrt(reps))}
    if ess < 100:
        warnings.warn(f"LG sampler effective sample size {ess:.1f} below 100", RuntimeWarning)
        diag["low_ess"] = True
    out = ChainSample(s1, s2, "ImportanceLG", logw, ess, diag)
    if resample:
        idx = systematic_resample(w, RngStream(rng.seed, rng.stream_id ^ (1 << 39)).uniform())
        out = ChainSample(s1[idx], s2[idx], "ImportanceLG", None, ess, diag)
    return out


def p0v_table(table: VTable, alpha: float, h: float = 1e-3):
    """Grid and normalized CDF of p0V for inverse-CDF sampling."""
    lo = min(table.grid[0], -60.0 / alpha)
    hi = math.log(800.0)
    grid = np.arange(lo, hi + h, h)
    dens = eval_p0V(grid, table, alpha)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * h)])
    mass = cdf[-1]
    return grid, cdf / mass, mass


def envelope_shift(theta: float) -> float:
    """Proposals with ``a - b`` beyond this are ignored by the envelope;
    ``P(a - b > shift)`` is of order exp(-30)."""
    return (ENVELOPE_TAIL + math.log1p(ENVELOPE_TAIL / theta)) / theta


@njit(cache=True)
def _sequential(r, theta, pgrid, pcdf, vgrid, v, logv, left_linear, left_slope,
                right_logslope, shift, seed, base, R, max_rej):
    s1 = np.empty((R, r))
    s2 = np.empty((R, r))
    proposals = 0
    excess = 0
    worst = 0
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        u = uniform(state)
        j = np.searchsorted(pcdf, u)
        if j <= 0:
            y = pgrid[0]
        elif j >= pcdf.size:
            y = pgrid[-1]
        else:
            w = (u - pcdf[j - 1]) / (pcdf[j] - pcdf[j - 1])
            y = pgrid[j - 1] + w * (pgrid[j] - pgrid[j - 1])
        x = 0.0
        s1[i, 0] = x
        s2[i, 0] = y
        for k in range(1, r):
            z1 = y - x
            bound = v_eval(z1 - shift, vgrid, v, logv, left_linear, left_slope, right_logslope)
            tries = 0
            while True:
                a = f_theta_variate(state, theta)
                b = f_theta_variate(state, theta)
                tries += 1
                x2 = x + a
                y2 = y + b
                vv = v_eval(y2 - x2, vgrid, v, logv, left_linear, left_slope, right_logslope)
                acc = vv / bound * np.exp(-np.exp(y - x2) - np.exp(y2 - x2))
                if acc > 1.0:
                    excess += 1
                if uniform(state) < acc:
                    break
                if tries >= max_rej:
                    return s1, s2, proposals, excess, -1 - i
            proposals += tries
            if tries > worst:
                worst = tries
            x = x2
            y = y2
            s1[i, k] = x
            s2[i, k] = y
    return s1, s2, proposals, excess, worst


def sample_sequential_pv(r: int, table: VTable, theta: float, alpha: float, reps: int,
                         rng: RngStream) -> ChainSample:
    """Unweighted prefixes from the Markov chain's own transition law."""
    _check(table, theta, alpha)
    if r < 1:
        raise ParameterError("r must be positive")
    pgrid, pcdf, mass = p0v_table(table, alpha)
    shift = envelope_shift(theta)
    s1, s2, proposals, excess, worst = _sequential(
        int(r), float(theta), pgrid, pcdf, *table.kernel_args(), shift,
        np.uint64(rng.seed), np.uint64(rng.stream_id), int(reps), MAX_REJECTIONS,
    )
    if worst < 0:
        raise SamplerError(
            f"{MAX_REJECTIONS} consecutive rejections (replica {-1 - worst}); V table range too narrow"
        )
    steps = max(reps * (r - 1), 1)
    diag = {
        "p0V_mass": float(mass),
        "mean_proposals_per_step": proposals / steps,
        "max_proposals": int(worst),
        "envelope_exceedances": int(excess),
        "envelope_shift": shift,
    }
    return ChainSample(s1, s2, "SequentialPV", None, float(reps), diag)
