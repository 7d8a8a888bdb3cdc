from __future__ import annotations

import math

import numpy as np
import pytest

from hslg.distributions import ParameterError, log_density_f_theta, trigamma
from hslg.oracles import f_theta_cdf, g_alpha_cdf, normal_cdf, quad, rayleigh_cdf
from hslg.rng import RngStream
from hslg.softwalks import (
    InitCondition,
    TwoWalkPath,
    diffusive_check,
    diffusive_positions,
    estimate_EW,
    log_W,
    log_W_hat,
    log_W_split,
    nonintersect_prob,
    sample_free,
    soft_free_sample,
)
from hslg.stats import EmpiricalDistribution, ks_vs_cdf

D0 = InitCondition.dirac(0.0)


def f1(x):
    return math.exp(log_density_f_theta(x, 1.0))


def test_n1_paths_are_the_starts():
    p = sample_free(1, D0, InitCondition.dirac(-3.0), 1.0, RngStream(0))
    assert p.s1.tolist() == [0.0] and p.s2.tolist() == [-3.0] and p.log_weight == 0.0


def test_bad_init_conditions():
    with pytest.raises(ValueError):
        InitCondition.dirac(math.inf)
    with pytest.raises(ValueError):
        InitCondition.g_alpha(0.0)
    with pytest.raises(ValueError):
        TwoWalkPath(np.zeros(3), np.zeros(2))


def test_first_increment_is_f_theta():
    s = soft_free_sample(2, D0, D0, 1.0, 10**5, RngStream(1))
    assert ks_vs_cdf(EmpiricalDistribution(s.s1[:, 1]), f_theta_cdf(1.0)) <= 0.006


def test_g_alpha_start():
    s = soft_free_sample(2, D0, InitCondition.g_alpha(1.0), 1.0, 10**5, RngStream(2), observe=[0])
    assert ks_vs_cdf(EmpiricalDistribution(s.s2[:, 0]), g_alpha_cdf(1.0)) <= 0.006


def test_log_w_single_term():
    p = TwoWalkPath([0.0, 5.0], [-5.0, 123.0])
    assert log_W(p) == pytest.approx(-math.exp(-10.0), rel=1e-14)
    assert log_W_hat(p, 1) == 0.0


def test_log_w_constant_gap_against_direct_sum():
    s1 = np.array([0.3, -1.2, 2.5, 0.7])
    p = TwoWalkPath(s1, s1 + 3.0)
    direct = -(math.exp(s1[0] + 3 - s1[1])
               + math.exp(s1[1] + 3 - s1[2]) + math.exp(3.0)
               + math.exp(s1[2] + 3 - s1[3]) + math.exp(3.0))
    assert log_W(p) == pytest.approx(direct, abs=1e-12, rel=1e-15)


def test_decomposition_is_bit_exact():
    gen = np.random.default_rng(5)
    for i in range(1000):
        n = int(gen.integers(2, 40))
        a = int(gen.integers(1, n))
        scale = float(gen.choice([0.5, 3.0, 10.0]))
        path = sample_free(n, InitCondition.dirac(gen.normal(0, scale)), InitCondition.dirac(gen.normal(0, scale)),
                           float(gen.uniform(0.3, 3.0)), RngStream(7, i))
        assert log_W(path) == log_W_hat(path, a) + log_W_split(path, a)


def test_index_errors():
    p = TwoWalkPath(np.zeros(3), np.zeros(3))
    with pytest.raises(ParameterError):
        log_W_split(p, 3)
    with pytest.raises(ParameterError):
        log_W_split(p, 0)
    with pytest.raises(ParameterError):
        log_W_hat(p, 4)
    with pytest.raises(ParameterError):
        log_W(TwoWalkPath([0.0], [0.0]))


def test_weights_nonpositive_and_monotone_in_s2():
    gen = np.random.default_rng(8)
    for i in range(200):
        path = sample_free(12, D0, InitCondition.dirac(-1.0), 1.0, RngStream(8, i))
        base = log_W(path)
        assert base <= 0.0
        k = int(gen.integers(0, 12))
        s2 = path.s2.copy()
        s2[k] += float(gen.uniform(0.01, 2.0))
        assert log_W(TwoWalkPath(path.s1, s2)) <= base


def test_ew_far_apart_is_one():
    m, se = estimate_EW(2, D0, InitCondition.dirac(-20.0), 1.0, 1000, RngStream(3))
    assert abs(m - 1.0) < 1e-4


def test_ew_two_steps_matches_quadrature():
    ref = quad(lambda x: math.exp(-math.exp(-x)) * f1(x), -60, 60)
    m, se = estimate_EW(2, D0, D0, 1.0, 10**6, RngStream(4))
    assert abs(m - ref) < 3 * se


def test_ew_n_to_minus_half_scaling():
    vals = []
    for i, n in enumerate([100, 400, 1600]):
        m, _ = estimate_EW(n, D0, InitCondition.dirac(-1.0), 1.0, 10**5, RngStream(5, i * 10**6))
        vals.append(math.sqrt(n) * m)
    assert max(vals) / min(vals) < 1.15


def test_self_normalized_constant_is_exact():
    s = soft_free_sample(30, D0, D0, 1.0, 5000, RngStream(6))
    assert s.mean(np.ones(5000))[0] == 1.0
    assert 1.0 <= s.ess <= 5000


def test_tilted_probability_two_steps():
    num = quad(lambda x: math.exp(-math.exp(-x)) * f1(x), 0, 60)
    den = quad(lambda x: math.exp(-math.exp(-x)) * f1(x), -60, 60)
    s = soft_free_sample(2, D0, D0, 1.0, 2 * 10**5, RngStream(9))
    m, se = s.mean((s.s1[:, 1] - s.s2[:, 0] > 0).astype(float))
    assert abs(m - num / den) < 3 * se


def test_low_ess_is_flagged_not_fatal():
    with pytest.warns(RuntimeWarning):
        s = soft_free_sample(2, D0, InitCondition.dirac(40.0), 1.0, 100, RngStream(10))
    assert s.low_ess


def test_meander_endpoint_is_rayleigh():
    n = 400
    s = soft_free_sample(n, D0, InitCondition.g_alpha(1.0), 1.0, 2 * 10**5, RngStream(11), observe=[n - 1])
    u = (s.s1[:, 0] - s.s2[:, 0]) / math.sqrt(n)
    d = EmpiricalDistribution(u, s.weights)
    assert ks_vs_cdf(d, rayleigh_cdf(4.0 * trigamma(1.0))) <= 0.05


def test_nonintersection_trivial_cases():
    assert nonintersect_prob(2, 0.0, 5.0, 1.0, 1000, RngStream(0))[0] == 1.0
    p, se = nonintersect_prob(3, 0.0, 0.0, 1.0, 10**5, RngStream(1))
    assert abs(p - 0.5) < 3 * se
    with pytest.raises(ParameterError):
        nonintersect_prob(3, 0.0, 0.0, 1.0, 10, RngStream(1))


def test_split_identity_against_fresh_walks():
    a, b = 6, 10
    prefix = sample_free(a, D0, InitCondition.dirac(-0.5), 1.0, RngStream(12))
    x, y = prefix.s1[-1], prefix.s2[-1]
    vals = []
    for i in range(4000):
        tail = sample_free(b + 1, InitCondition.dirac(x), InitCondition.dirac(y), 1.0, RngStream(13, i))
        full = TwoWalkPath(np.concatenate([prefix.s1, tail.s1[1:]]), np.concatenate([prefix.s2, tail.s2[1:]]))
        vals.append(math.exp(log_W_split(full, a)))
    m1, se1 = float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    m2, se2 = estimate_EW(b + 1, InitCondition.dirac(x), InitCondition.dirac(y), 1.0, 4000, RngStream(14))
    assert abs(m1 - m2) < 3 * math.hypot(se1, se2)


def test_diffusive_start_and_far_gap():
    assert diffusive_positions(400, [0.0])[0] == 0
    n = 400
    sigma2 = 4.0 * trigamma(1.0)
    z = 6.5 * math.sqrt(sigma2)
    rep = diffusive_check(n, z * math.sqrt(n), 0.0, 1.0, 10**5, RngStream(15), times=(0.0, 1.0))
    u0 = (rep.sample.s1[:, 0] - rep.sample.s2[:, 0]) / math.sqrt(n)
    assert np.all(u0 == z) and rep.ks[0] == 0.0
    u1 = (rep.sample.s1[:, 1] - rep.sample.s2[:, 1]) / math.sqrt(n)
    assert ks_vs_cdf(EmpiricalDistribution(u1, rep.sample.weights), normal_cdf(z, sigma2)) <= 0.05


def test_diffusive_conditioned_marginals():
    n = 400
    rep = diffusive_check(n, math.sqrt(n), 0.0, 1.0, 10**5, RngStream(16))
    assert rep.z == 1.0
    assert max(rep.ks) <= 0.06


def test_diffusive_rejects_nonpositive_gap():
    with pytest.raises(ParameterError):
        diffusive_check(100, 0.0, 1.0, 1.0, 1000, RngStream(0))
