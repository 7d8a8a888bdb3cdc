from __future__ import annotations

import math

import numpy as np
import pytest

from hslg.distributions import ParameterError, PolymerParams
from hslg.oracles import brute_force_log_partition
from hslg.polymer import (
    draw_disorder,
    evolve_layers,
    evolve_stationary,
    evolve_stationary_batch,
    log_partition_field,
    simulate_increments,
    simulate_increments_batch,
)
from hslg.rng import RngStream

P = PolymerParams(1.0, 1.0)


def test_n1_r1_is_zero():
    for s in range(20):
        assert simulate_increments(P, 1, 1, RngStream(s)).tolist() == [0.0]


def test_n1_logz_is_the_diagonal_weight():
    logw = draw_disorder(P, 1, RngStream(4))
    field = log_partition_field(logw)
    assert field[1, 1] == logw[1, 1]


def test_n2_matches_path_enumeration():
    for s in range(10):
        out = simulate_increments(P, 2, 2, RngStream(s))
        logw = draw_disorder(P, 2, RngStream(s))
        ref = brute_force_log_partition(logw, 3, 1) - brute_force_log_partition(logw, 2, 2)
        assert out[1] == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5])
def test_recursion_equals_path_sums(N):
    params = PolymerParams(0.7, 0.4)
    for s in range(20):
        logw = draw_disorder(params, N, RngStream(s, N))
        field = log_partition_field(logw)
        for m in range(1, 2 * N):
            for n in range(1, min(m, 2 * N - m) + 1):
                assert field[m, n] == pytest.approx(brute_force_log_partition(logw, m, n), abs=1e-10)


def test_r_greater_than_n_rejected():
    with pytest.raises(ParameterError):
        simulate_increments(P, 2, 3, RngStream(0))
    with pytest.raises(ParameterError):
        simulate_increments(P, 0, 1, RngStream(0))


def test_batch_rows_equal_single_replicas():
    rng = RngStream(7, 100)
    batch = simulate_increments_batch(P, 6, 3, 5, rng)
    for i in range(5):
        single = simulate_increments(P, 6, 3, RngStream(7, 100 + i))
        assert batch[i].tobytes() == single.tobytes()


def test_monotone_in_disorder():
    N = 4
    logw = draw_disorder(P, N, RngStream(11))
    base = log_partition_field(logw)
    for i in range(1, 2 * N):
        for j in range(1, min(i, 2 * N - i) + 1):
            bumped = logw.copy()
            bumped[i, j] += 0.3
            f = log_partition_field(bumped)
            for m in range(i, 2 * N):
                for n in range(j, min(m, 2 * N - m) + 1):
                    assert f[m, n] >= base[m, n]


def test_evolve_zero_steps_returns_increments_of_h():
    h = np.array([0.5, -1.0, 2.0, 3.0])
    out = evolve_stationary(P, h, 0, 3, RngStream(0))
    assert np.array_equal(out, h[:3] - h[0])


def test_evolve_one_step_by_hand():
    # K = 3 needs two bulk draws on the odd half-layer, then the diagonal and one bulk draw
    params = PolymerParams(1.3, 0.6)
    h = np.zeros(3)
    out = evolve_stationary(params, h, 1, 1, RngStream(21))
    layer = evolve_layers(params, h, 1, RngStream(21))
    r = RngStream(21)
    w10 = -r.log_gamma(params.bulk_shape)
    w2m1 = -r.log_gamma(params.bulk_shape)
    w11 = -r.log_gamma(params.diagonal_shape)
    w20 = -r.log_gamma(params.bulk_shape)
    z10 = math.exp(w10) * (1 + 1)
    z2m1 = math.exp(w2m1) * (1 + 1)
    z11 = math.exp(w11) * z10
    z20 = math.exp(w20) * (z10 + z2m1)
    assert out.tolist() == [0.0]
    assert layer[0] == pytest.approx(math.log(z11), abs=1e-10)
    assert layer[1] == pytest.approx(math.log(z20), abs=1e-10)


def test_evolve_two_steps_against_path_sums():
    params = PolymerParams(1.0, 0.5)
    K = 6
    h = np.random.default_rng(3).normal(size=K)
    layer = evolve_layers(params, h, 2, RngStream(5))
    r = RngStream(5)
    Z = {(k - 1, -k + 1): math.exp(h[k - 1] - h[0]) for k in range(1, K + 1)}
    width = K
    for t in range(2):
        odd = {}
        for k in range(width - 1):
            m, n = t + 1 + k, t - k
            odd[m, n] = math.exp(-r.log_gamma(params.bulk_shape)) * (Z[m - 1, n] + Z[m, n - 1])
        Z.update(odd)
        for k in range(width - 1):
            m, n = t + 1 + k, t + 1 - k
            if k == 0:
                Z[m, n] = math.exp(-r.log_gamma(params.diagonal_shape)) * Z[m, n - 1]
            else:
                Z[m, n] = math.exp(-r.log_gamma(params.bulk_shape)) * (Z[m - 1, n] + Z[m, n - 1])
        width -= 1
    ref = [math.log(Z[2 + k, 2 - k]) for k in range(width)]
    assert np.allclose(layer, ref, atol=1e-10, rtol=0)


def test_translation_is_bit_exact():
    # dyadic entries so that h + c is exact in floating point
    h = np.round(np.random.default_rng(0).normal(size=12) * 2**20) / 2**20
    a = evolve_stationary(P, h, 5, 4, RngStream(9))
    b = evolve_stationary(P, h + 3.0, 5, 4, RngStream(9))
    assert a.tobytes() == b.tobytes()


def test_evolve_errors():
    with pytest.raises(ParameterError):
        evolve_stationary(P, np.zeros(4), 3, 2, RngStream(0))
    with pytest.raises(ValueError):
        evolve_stationary(P, np.array([0.0, np.inf, 0.0, 0.0, 0.0]), 1, 1, RngStream(0))
    with pytest.raises(ValueError):
        evolve_stationary_batch(P, np.full((2, 5), np.nan), 1, 1, RngStream(0))


def test_evolve_batch_rows_equal_single():
    H = np.random.default_rng(1).normal(size=(4, 10))
    out = evolve_stationary_batch(P, H, 4, 3, RngStream(2, 50))
    for i in range(4):
        assert np.array_equal(out[i], evolve_stationary(P, H[i], 4, 3, RngStream(2, 50 + i)))
