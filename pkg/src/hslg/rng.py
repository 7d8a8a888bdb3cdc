"""Counter-based random streams (Philox4x32-10) usable from numba kernels.

A stream is identified by a 64-bit ``seed`` (the cipher key) and a 64-bit
``stream_id`` (the upper half of the counter).  The lower half of the counter
is the block position, so draws are a pure function of
``(seed, stream_id, position)``.  Every replica of an experiment gets its own
stream, which makes results independent of scheduling and worker count.

The stream state is a small ``uint64`` array so that it can be threaded
through jitted code:

    state[0] key, state[1] stream id, state[2] next block,
    state[3] spare flag, state[4] spare 53-bit integer
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_ZERO = np.uint64(0)
_ONE = np.uint64(1)
_TWO26 = np.uint64(67108864)
_INV53 = 1.0 / 9007199254740992.0

STATE_SIZE = 5


@njit(cache=True, inline="always")
def _round(c0, c1, c2, c3, k0, k1):
    p0 = _M0 * c0
    p1 = _M1 * c2
    return (
        ((p1 >> _S32) ^ c1 ^ k0) & _MASK,
        p1 & _MASK,
        ((p0 >> _S32) ^ c3 ^ k1) & _MASK,
        p0 & _MASK,
    )


@njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block.  All arguments are uint64 holding 32 bits."""
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    for _ in range(9):
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
        c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    return c0, c1, c2, c3


@njit(cache=True)
def init_state(state, seed, stream_id):
    state[0] = np.uint64(seed)
    state[1] = np.uint64(stream_id)
    state[2] = _ZERO
    state[3] = _ZERO
    state[4] = _ZERO


@njit(cache=True)
def new_state(seed, stream_id):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    init_state(state, seed, stream_id)
    return state


@njit(cache=True)
def uniform(state):
    """Uniform on the open interval (0, 1) with 53 random bits."""
    if state[3] != _ZERO:
        state[3] = _ZERO
        return (np.float64(state[4]) + 0.5) * _INV53
    key = state[0]
    sid = state[1]
    blk = state[2]
    state[2] = blk + _ONE
    r0, r1, r2, r3 = philox4x32(
        blk & _MASK, blk >> _S32, sid & _MASK, sid >> _S32, key & _MASK, key >> _S32
    )
    a = (r0 >> _S5) * _TWO26 + (r1 >> _S6)
    b = (r2 >> _S5) * _TWO26 + (r3 >> _S6)
    state[3] = _ONE
    state[4] = b
    return (np.float64(a) + 0.5) * _INV53


@njit(cache=True)
def normal(state):
    """Standard normal by Box-Muller (one normal per two uniforms)."""
    u1 = uniform(state)
    u2 = uniform(state)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@njit(cache=True)
def _log_gamma_ge1(state, shape):
    # Marsaglia-Tsang squeeze/rejection, returned in log space
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    while True:
        x = normal(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = uniform(state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return np.log(d) + np.log(v)
        if np.log(u) < 0.5 * x2 + d * (1.0 - v + np.log(v)):
            return np.log(d) + np.log(v)


@njit(cache=True)
def log_gamma_variate(state, shape):
    """log of a Gamma(shape, 1) variate; shape < 1 uses the power boost.

    Shapes 1 and 2 are sums of exponentials (same law, far cheaper).
    """
    if shape == 1.0:
        return np.log(-np.log(uniform(state)))
    if shape == 2.0:
        return np.log(-np.log(uniform(state)) - np.log(uniform(state)))
    if shape >= 1.0:
        return _log_gamma_ge1(state, shape)
    lg = _log_gamma_ge1(state, shape + 1.0)
    return lg + np.log(uniform(state)) / shape


@njit(cache=True)
def fill_uniform(state, out):
    for i in range(out.size):
        out[i] = uniform(state)


@njit(cache=True)
def fill_normal(state, out):
    for i in range(out.size):
        out[i] = normal(state)


@njit(cache=True)
def fill_log_gamma(state, shape, out):
    for i in range(out.size):
        out[i] = log_gamma_variate(state, shape)


def experiment_tag(experiment_id: str) -> int:
    """24-bit tag derived from an experiment name."""
    h = hashlib.blake2b(experiment_id.encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 40


def stream_id_for(experiment_id: str, index: int = 0) -> int:
    """Stream id: experiment tag in the high 24 bits, replica/block index below."""
    if not 0 <= index < (1 << 40):
        raise ValueError("replica index out of range")
    return (experiment_tag(experiment_id) << 40) | index


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value < (1 << 64):
        raise ValueError(f"{name} must fit in 64 unsigned bits")
    return value


@dataclass
class RngStream:
    """A reproducible stream; ``state`` can be passed to jitted kernels."""

    seed: int
    stream_id: int = 0
    state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.seed = _check_u64("seed", self.seed)
        self.stream_id = _check_u64("stream_id", self.stream_id)
        self.state = new_state(np.uint64(self.seed), np.uint64(self.stream_id))

    @classmethod
    def for_experiment(cls, seed: int, experiment_id: str, index: int = 0) -> "RngStream":
        return cls(seed, stream_id_for(experiment_id, index))

    @property
    def position(self) -> int:
        """Number of Philox blocks consumed so far."""
        return int(self.state[2])

    def uniform(self, size: int | None = None):
        if size is None:
            return float(uniform(self.state))
        out = np.empty(int(size))
        fill_uniform(self.state, out)
        return out

    def standard_normal(self, size: int | None = None):
        if size is None:
            return float(normal(self.state))
        out = np.empty(int(size))
        fill_normal(self.state, out)
        return out

    def log_gamma(self, shape: float, size: int | None = None):
        if not shape > 0:
            raise ValueError("gamma shape must be positive")
        if size is None:
            return float(log_gamma_variate(self.state, float(shape)))
        out = np.empty(int(size))
        fill_log_gamma(self.state, float(shape), out)
        return out

    def gamma(self, shape: float, size: int | None = None):
        return np.exp(self.log_gamma(shape, size))
