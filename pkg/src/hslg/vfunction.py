"""Monte Carlo estimation and tabulation of the Doob function

    V(z) = lim_n E^{n;(0,z)}[W_n] / E^{n;(0,g_alpha)}[W_n].

Every term of ``log W_n`` contains ``S2 - S1`` once, so for walks started
from ``(0, z)`` one has ``W_n = exp(-e^z * Lam)`` with ``Lam`` a function of
the increments alone.  One simulation of ``Lam`` (plus one ``g_alpha`` draw
for the denominator) per replica therefore serves every grid point, every
walk length of the schedule (as prefixes of a single long path) and the
denominator: common random numbers throughout, and monotonicity in ``z`` is
exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .distributions import ParameterError, f_theta_variate
from .rng import RngStream, log_gamma_variate, new_state

VTABLE_FORMAT = "hslg.vtable"
VTABLE_VERSION = 1
DEFAULT_GRID = np.round(np.arange(-8.0, 12.0 + 1e-9, 0.25), 10)
REL_TOL = 0.05


class EstimationError(RuntimeError):
    pass


class TableRejected(RuntimeError):
    def __init__(self, message: str, table: "VTable"):
        super().__init__(message)
        self.table = table


@njit(cache=True)
def _log_lambda(theta, alpha, ns, seed, base, R):
    """Per replica: log Lam_n for each n in ``ns`` (prefixes of one path of
    length max(ns)) and a g_alpha draw G.  Walks start at 0; S1 first."""
    nmax = ns[-1]
    out = np.empty((R, ns.size))
    G = np.empty(R)
    s1 = np.empty(nmax)
    s2 = np.empty(nmax)
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        G[i] = log_gamma_variate(state, alpha)
        s1[0] = 0.0
        s2[0] = 0.0
        for k in range(1, nmax):
            s1[k] = s1[k - 1] + f_theta_variate(state, theta)
        for k in range(1, nmax):
            s2[k] = s2[k - 1] + f_theta_variate(state, theta)
        lam = 0.0
        j = 0
        # Lam_n collects terms k = 0 .. n-2 (0-based)
        for k in range(0, nmax - 1):
            while j < ns.size and ns[j] - 1 == k:
                out[i, j] = np.log(lam)
                j += 1
            lam += np.exp(s2[k] - s1[k + 1])
            if k > 0:
                lam += np.exp(s2[k] - s1[k])
        while j < ns.size:
            out[i, j] = np.log(lam)
            j += 1
    return out, G


@njit(cache=True)
def _ratio_moments(loglam, G, zs):
    """Sums needed for the ratio estimator at each z: (sum N, sum N^2, sum N D),
    plus (sum D, sum D^2)."""
    R = loglam.size
    nz = zs.size
    sN = np.zeros(nz)
    sNN = np.zeros(nz)
    sND = np.zeros(nz)
    sD = 0.0
    sDD = 0.0
    ez = np.exp(zs)
    for i in range(R):
        lam = np.exp(loglam[i])
        d = np.exp(-np.exp(G[i] + loglam[i]))
        sD += d
        sDD += d * d
        for j in range(nz):
            w = np.exp(-ez[j] * lam)
            sN[j] += w
            sNN[j] += w * w
            sND[j] += w * d
    return sN, sNN, sND, sD, sDD


def _ratio(sN, sNN, sND, sD, sDD, R):
    Dm = sD / R
    Nm = sN / R
    v = Nm / Dm
    # delta method: var(N_i - v D_i) / (R Dm^2)
    var = (sNN - 2 * v * sND + v * v * sDD) / R
    se = np.sqrt(np.maximum(var, 0.0) / R) / Dm
    d_se = math.sqrt(max(sDD / R - Dm * Dm, 0.0) / R)
    return v, se, Dm, d_se


@dataclass
class VEstimates:
    """Raw estimates on a grid for each walk length of a schedule."""

    grid: np.ndarray
    schedule: np.ndarray
    v: np.ndarray  # (len(schedule), len(grid))
    stderr: np.ndarray
    denom: np.ndarray  # (len(schedule), 2)


def estimate_grid(grid, schedule, reps: int, theta: float, alpha: float, rng: RngStream) -> VEstimates:
    if not alpha > 0:
        raise ParameterError("V is defined for alpha > 0 only")
    grid = np.asarray(grid, dtype=float)
    ns = np.asarray(schedule, dtype=np.int64)
    if ns.size == 0 or np.any(np.diff(ns) < 0) or ns[0] < 2:
        raise ParameterError("schedule must be non-decreasing with entries >= 2")
    if reps < 2:
        raise ParameterError("reps must be at least 2")
    loglam, G = _log_lambda(float(theta), float(alpha), ns, np.uint64(rng.seed),
                            np.uint64(rng.stream_id), int(reps))
    V = np.empty((ns.size, grid.size))
    S = np.empty_like(V)
    den = np.empty((ns.size, 2))
    for j in range(ns.size):
        sums = _ratio_moments(np.ascontiguousarray(loglam[:, j]), G, grid)
        v, se, Dm, d_se = _ratio(*sums, reps)
        if Dm <= 3 * d_se:
            raise EstimationError(f"denominator {Dm:.3g} within 3 stderr of zero at n={ns[j]}")
        V[j], S[j], den[j] = v, se, (Dm, d_se)
    return VEstimates(grid, ns, V, S, den)


def estimate_V(z: float, n: int, theta: float, alpha: float, reps: int, rng: RngStream) -> tuple[float, float]:
    """Ratio estimate of V(z) at walk length n, with delta-method stderr."""
    if n < 16:
        raise ParameterError("n must be at least 16")
    est = estimate_grid([z], [n], reps, theta, alpha, rng)
    return float(est.v[0, 0]), float(est.stderr[0, 0])


def estimate_V_pair(x: float, y: float, n: int, theta: float, alpha: float, reps: int,
                    rng: RngStream) -> tuple[float, float]:
    """V for walks started at (x, y); the weights see only y - x."""
    return estimate_V(y - x, n, theta, alpha, reps, rng)


@dataclass
class VTable:
    grid: np.ndarray
    v: np.ndarray
    stderr: np.ndarray
    n_used: int
    theta: float
    alpha: float
    denom: tuple
    flags: np.ndarray = None
    schedule: list = field(default_factory=list)
    seed: int | None = None
    stream_id: int | None = None
    reps: int | None = None
    left_rule: str = "linear"
    accepted: bool = True

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.flags is None:
            self.flags = np.ones(self.grid.size, dtype=bool)
        self.flags = np.asarray(self.flags, dtype=bool)
        if self.grid.size < 2 and self.left_rule == "linear":
            self.left_rule = "clamp"
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.left_rule not in ("clamp", "linear"):
            raise ValueError("left_rule must be 'clamp' or 'linear'")
        self._prep()

    def _prep(self) -> None:
        g, v = self.grid, self.v
        self.logv = np.log(v) if np.all(v > 0) else np.log(np.maximum(v, 1e-300))
        if g.size >= 2:
            # left: least-squares slope over the first 2 units of the grid
            m = max(2, int(np.sum(g <= g[0] + 2.0)))
            slope = np.polyfit(g[:m], v[:m], 1)[0]
            self.left_slope = float(max(-slope, 0.0))
            self.right_logslope = float(min((self.logv[-1] - self.logv[-2]) / (g[-1] - g[-2]), 0.0))
        else:
            self.left_slope = 0.0
            self.right_logslope = 0.0

    @property
    def positive(self) -> bool:
        return bool(np.all(self.v > 0))

    @property
    def flag_fraction(self) -> float:
        return float(np.mean(self.flags))

    def kernel_args(self, left: str | None = None):
        rule = self.left_rule if left is None else left
        return (self.grid, self.v, self.logv, 1 if rule == "linear" else 0,
                self.left_slope, self.right_logslope)

    def to_dict(self) -> dict:
        return {
            "format": VTABLE_FORMAT,
            "version": VTABLE_VERSION,
            "theta": self.theta,
            "alpha": self.alpha,
            "n_used": int(self.n_used),
            "schedule": [int(x) for x in self.schedule],
            "reps": self.reps,
            "seed": self.seed,
            "stream_id": self.stream_id,
            "left_rule": self.left_rule,
            "accepted": bool(self.accepted),
            "denom": [float(self.denom[0]), float(self.denom[1])],
            "grid": self.grid.tolist(),
            "v": self.v.tolist(),
            "stderr": self.stderr.tolist(),
            "flags": [bool(f) for f in self.flags],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "VTable":
        if d.get("format") != VTABLE_FORMAT:
            raise ValueError("not a V table document")
        if d.get("version") != VTABLE_VERSION:
            raise ValueError(f"unsupported V table version {d.get('version')}")
        return cls(
            grid=d["grid"], v=d["v"], stderr=d["stderr"], n_used=d["n_used"],
            theta=d["theta"], alpha=d["alpha"], denom=tuple(d["denom"]), flags=d.get("flags"),
            schedule=d.get("schedule", []), seed=d.get("seed"), stream_id=d.get("stream_id"),
            reps=d.get("reps"), left_rule=d.get("left_rule", "linear"),
            accepted=d.get("accepted", True),
        )

    @classmethod
    def load(cls, path) -> "VTable":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def doubling_flags(est: VEstimates, rel_tol: float = REL_TOL) -> np.ndarray:
    """Per grid point: the last two schedule entries agree within
    ``max(2 combined stderr, rel_tol * V_n)``."""
    if est.schedule.size < 2:
        return np.ones(est.grid.size, dtype=bool)
    a, b = est.v[-1], est.v[-2]
    comb = np.sqrt(est.stderr[-1] ** 2 + est.stderr[-2] ** 2)
    return np.abs(a - b) <= np.maximum(2 * comb, rel_tol * a)


def build_v_table(grid, n_schedule, reps: int, theta: float, alpha: float, rng: RngStream,
                  left_rule: str = "linear", strict: bool = True,
                  rel_tol: float = REL_TOL) -> VTable:
    """Estimate V on ``grid`` at each walk length and keep the largest.

    Raises ``TableRejected`` (carrying the table) if more than 10% of grid
    points fail the doubling check and ``strict`` is set.
    """
    est = estimate_grid(grid, n_schedule, reps, theta, alpha, rng)
    flags = doubling_flags(est, rel_tol)
    table = VTable(
        grid=est.grid, v=est.v[-1], stderr=est.stderr[-1], n_used=int(est.schedule[-1]),
        theta=float(theta), alpha=float(alpha), denom=tuple(est.denom[-1]), flags=flags,
        schedule=[int(x) for x in est.schedule], seed=rng.seed, stream_id=rng.stream_id,
        reps=int(reps), left_rule=left_rule,
    )
    table.estimates = est
    bad = 1.0 - table.flag_fraction
    if bad > 0.10 or not table.positive:
        table.accepted = False
        if strict:
            raise TableRejected(
                f"doubling check failed at {bad:.1%} of grid points"
                + ("" if table.positive else "; non-positive values present"),
                table,
            )
    return table


@njit(cache=True)
def v_eval(z, grid, v, logv, left_linear, left_slope, right_logslope):
    """Table lookup used by the samplers (see ``v_interpolate``)."""
    n = grid.size
    if z <= grid[0]:
        if left_linear == 1:
            return v[0] + left_slope * (grid[0] - z)
        return v[0]
    if z >= grid[n - 1]:
        return v[n - 1] * np.exp(right_logslope * (z - grid[n - 1]))
    j = np.searchsorted(grid, z, side="right")
    w = (z - grid[j - 1]) / (grid[j] - grid[j - 1])
    return v[j - 1] + w * (v[j] - v[j - 1])


@njit(cache=True)
def v_eval_many(zs, grid, v, logv, left_linear, left_slope, right_logslope):
    out = np.empty(zs.size)
    for i in range(zs.size):
        out[i] = v_eval(zs[i], grid, v, logv, left_linear, left_slope, right_logslope)
    return out


def v_interpolate(table: VTable, z, left: str | None = None):
    """Piecewise-linear inside the grid, log-linear on the right; on the left
    either clamps (``left='clamp'``) or continues linearly with the slope of
    the first grid segments (``'linear'``).  Defaults to the table's rule.

    V decays like exp(-c e^z), so far to the right the value underflows to 0."""
    args = table.kernel_args(left)
    z = np.asarray(z, dtype=float)
    out = v_eval_many(np.ascontiguousarray(z.ravel()), *args)
    return float(out[0]) if z.ndim == 0 else out.reshape(z.shape)
