"""Half-space log-gamma polymer: point-to-point free energies in log space.

Cells ``(m, n)`` with ``1 <= n <= m`` are swept layer by layer
(``s = m + n = 2, 3, ...``), and within a layer by increasing ``n``.  One
log-weight is drawn per cell in that order, on the fly, from the replica's
stream.  Only two layers are kept in memory.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .distributions import ParameterError, PolymerParams
from .rng import RngStream, log_gamma_variate, new_state

NEG_INF = -np.inf


@njit(cache=True, inline="always")
def logaddexp(a, b):
    m = a if a > b else b
    if m == -np.inf:
        return m
    return m + np.log1p(np.exp(-abs(a - b)))


@njit(cache=True)
def _sweep(N, bulk_shape, diag_shape, state, logw, draw, field):
    """Delta-initial-data recursion up to layer 2N.

    ``logw`` (2N+1, N+1): if ``draw`` the weights are drawn from ``state``
    and written into ``logw``, otherwise they are read from it.
    ``field`` receives log Z where it has room (pass a (0, 0) array to skip).
    Returns the last layer indexed by n (entry n is log Z(2N - n, n)).
    """
    store = field.shape[0] > 0
    prev = np.full(N + 2, -np.inf)
    cur = np.full(N + 2, -np.inf)
    for s in range(2, 2 * N + 1):
        nmax = s // 2
        # Z(s-1, 0) = 1{s-1 = 1}
        prev[0] = 0.0 if s == 2 else -np.inf
        for n in range(1, nmax + 1):
            m = s - n
            if draw:
                shape = diag_shape if m == n else bulk_shape
                lw = -log_gamma_variate(state, shape)
                logw[m, n] = lw
            else:
                lw = logw[m, n]
            if m == n:
                cur[n] = lw + prev[n - 1]
            else:
                cur[n] = lw + logaddexp(prev[n], prev[n - 1])
            if store:
                field[m, n] = cur[n]
        for n in range(1, nmax + 1):
            prev[n] = cur[n]
        prev[nmax + 1] = -np.inf
    out = np.empty(N + 1)
    out[0] = -np.inf
    for n in range(1, N + 1):
        out[n] = prev[n]
    return out


@njit(cache=True)
def _increments_batch(N, r, bulk_shape, diag_shape, seed, base, first, count):
    out = np.empty((count, r))
    nofield = np.empty((0, 0))
    logw = np.empty((2 * N + 1, N + 1))
    for i in range(count):
        state = new_state(seed, base + np.uint64(first + i))
        last = _sweep(N, bulk_shape, diag_shape, state, logw, True, nofield)
        for k in range(1, r + 1):
            out[i, k - 1] = last[N - k + 1] - last[N]
    return out


def _check_N_r(N: int, r: int) -> None:
    if N < 1 or r < 1:
        raise ParameterError("N and r must be positive")
    if r > N:
        raise ParameterError(f"r={r} exceeds N={N}")


def simulate_increments(params: PolymerParams, N: int, r: int, rng: RngStream) -> np.ndarray:
    """One disorder realization; returns ``log Z(N+k-1, N-k+1) - log Z(N, N)``."""
    _check_N_r(N, r)
    logw = np.full((2 * N + 1, N + 1), np.nan)
    last = _sweep(N, params.bulk_shape, params.diagonal_shape, rng.state, logw, True, np.empty((0, 0)))
    return np.array([last[N - k + 1] - last[N] for k in range(1, r + 1)])


def simulate_increments_batch(
    params: PolymerParams,
    N: int,
    r: int,
    replicas: int,
    rng: RngStream,
    first: int = 0,
) -> np.ndarray:
    """``(replicas, r)`` array; replica ``i`` draws from stream
    ``(rng.seed, rng.stream_id + first + i)``."""
    _check_N_r(N, r)
    return _increments_batch(
        N, r, params.bulk_shape, params.diagonal_shape,
        np.uint64(rng.seed), np.uint64(rng.stream_id), first, replicas,
    )


def draw_disorder(params: PolymerParams, N: int, rng: RngStream) -> np.ndarray:
    """Materialize the log-weights for cells with ``m + n <= 2N`` (nan elsewhere).

    Consumes the stream exactly as ``simulate_increments`` does.
    """
    logw = np.full((2 * N + 1, N + 1), np.nan)
    _sweep(N, params.bulk_shape, params.diagonal_shape, rng.state, logw, True, np.empty((0, 0)))
    return logw


def log_partition_field(logw: np.ndarray) -> np.ndarray:
    """log Z(m, n) for all cells covered by a materialized weight array."""
    N = logw.shape[1] - 1
    field = np.full_like(logw, np.nan)
    _sweep(N, 1.0, 1.0, new_state(np.uint64(0), np.uint64(0)), logw.copy(), False, field)
    return field


@njit(cache=True)
def _evolve(e, N, bulk_shape, diag_shape, state):
    K = e.size
    even = e.copy()
    odd = np.empty(K)
    width = K
    for t in range(N):
        for k in range(width - 1):
            lw = -log_gamma_variate(state, bulk_shape)
            odd[k] = lw + logaddexp(even[k], even[k + 1])
        lw = -log_gamma_variate(state, diag_shape)
        even[0] = lw + odd[0]
        for k in range(1, width - 1):
            lw = -log_gamma_variate(state, bulk_shape)
            even[k] = lw + logaddexp(odd[k - 1], odd[k])
        width -= 1
    return even[:width]


def evolve_layers(params: PolymerParams, h: np.ndarray, N: int, rng: RngStream) -> np.ndarray:
    """Apply N double half-layer updates to General(h); returns the surviving
    layer relative to ``h(1)`` (entry 0 is the diagonal)."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size < 1:
        raise ParameterError("h must be a non-empty vector")
    if not np.all(np.isfinite(h)):
        raise ValueError("initial data must be finite")
    if N < 0:
        raise ParameterError("N must be non-negative")
    if h.size < N + 1:
        raise ParameterError("initial layer too short for the number of steps")
    e = h - h[0]
    return _evolve(e, int(N), params.bulk_shape, params.diagonal_shape, rng.state)


def evolve_stationary(
    params: PolymerParams, h: np.ndarray, N: int, r: int, rng: RngStream
) -> np.ndarray:
    """Increments ``log Z_k - log Z_1`` on the anti-diagonal after N steps."""
    h = np.asarray(h, dtype=float)
    if r < 1:
        raise ParameterError("r must be positive")
    if h.size < N + r + 1:
        raise ParameterError(f"need K >= N + r + 1 = {N + r + 1}, got K={h.size}")
    layer = evolve_layers(params, h, N, rng)
    return layer[:r] - layer[0]


@njit(cache=True)
def _evolve_batch(H, N, r, bulk_shape, diag_shape, seed, base):
    R = H.shape[0]
    out = np.empty((R, r))
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        e = H[i] - H[i, 0]
        layer = _evolve(e, N, bulk_shape, diag_shape, state)
        for k in range(r):
            out[i, k] = layer[k] - layer[0]
    return out


def evolve_stationary_batch(
    params: PolymerParams,
    H: np.ndarray,
    N: int,
    r: int,
    rng: RngStream,
) -> np.ndarray:
    """Row-wise ``evolve_stationary``; row i uses stream ``rng.stream_id + i``."""
    H = np.ascontiguousarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] < N + r + 1:
        raise ParameterError(f"need rows of length >= N + r + 1 = {N + r + 1}")
    if not np.all(np.isfinite(H)):
        raise ValueError("initial data must be finite")
    return _evolve_batch(H, int(N), int(r), params.bulk_shape, params.diagonal_shape,
                         np.uint64(rng.seed), np.uint64(rng.stream_id))
