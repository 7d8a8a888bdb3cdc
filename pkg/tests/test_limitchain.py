from __future__ import annotations

import math

import numpy as np
import pytest

import hslg.limitchain as lc
from hslg.distributions import ParameterError, log_density_f_theta
from hslg.limitchain import (
    SamplerError,
    eval_p0V,
    eval_pV,
    p0v_table,
    sample_lg_prefix,
    sample_sequential_pv,
)
from hslg.oracles import simpson_cdf_table, cdf_from_table
from hslg.rng import RngStream
from hslg.stats import EmpiricalDistribution, ks_statistic, ks_two_sample, ks_vs_cdf
from hslg.vfunction import VTable, v_interpolate


@pytest.fixture(scope="module")
def seq3(vtable):
    return sample_sequential_pv(8, vtable, 1.0, 1.0, 100000, RngStream(31))


def test_r1_weight_is_v(vtable):
    s = sample_lg_prefix(1, vtable, 1.0, 1.0, 5000, RngStream(1))
    assert np.array_equal(s.log_weights, np.log(v_interpolate(vtable, s.s2[:, 0])))
    assert np.all(s.s1 == 0.0)
    w = s.weights
    assert np.isfinite(w.sum()) and w.sum() > 0


@pytest.mark.parametrize("r", [1, 2, 4])
def test_raw_mean_weight_is_one(vtable, r):
    s = sample_lg_prefix(r, vtable, 1.0, 1.0, 200000, RngStream(2, r))
    w = np.exp(s.log_weights)
    se_mc = w.std(ddof=1) / math.sqrt(w.size)
    what = np.exp(s.log_weights) / v_interpolate(vtable, s.s2[:, -1] - s.s1[:, -1])
    se_v = float(np.mean(what * np.interp(s.s2[:, -1] - s.s1[:, -1], vtable.grid, vtable.stderr)))
    assert abs(w.mean() - 1.0) < 3 * math.hypot(se_mc, se_v)


def test_lg_vs_sequential_r2(vtable, seq3):
    lg = sample_lg_prefix(2, vtable, 1.0, 1.0, 200000, RngStream(3))
    d = EmpiricalDistribution(lg.s1[:, 1], lg.weights)
    assert ks_statistic(d, EmpiricalDistribution(seq3.s1[:, 1])) <= 0.02


def test_lg_vs_sequential_r3(vtable, seq3):
    lg = sample_lg_prefix(3, vtable, 1.0, 1.0, 200000, RngStream(4))
    d = EmpiricalDistribution(lg.s1[:, 2], lg.weights)
    assert ks_statistic(d, EmpiricalDistribution(seq3.s1[:, 2])) <= 0.03


def test_p0v_normalization(vtable):
    _, _, mass = p0v_table(vtable, 1.0)
    assert abs(mass - 1.0) <= 0.03


def test_pv_normalization(vtable):
    h = 0.02
    x = np.arange(-40.0, 40.0 + h / 2, h)
    X, Y = np.meshgrid(x, x - 1.0, indexing="ij")
    dens = eval_pV((0.0, -1.0), (X, Y), vtable, 1.0)
    total = np.trapezoid(np.trapezoid(dens, dx=h, axis=1), dx=h)
    assert abs(total - 1.0) <= 0.05


def test_pv_far_start_has_no_penalty(vtable):
    x1, y1, x2, y2 = 0.0, -40.0, 0.5, -36.0
    ratio = v_interpolate(vtable, y2 - x2) / v_interpolate(vtable, y1 - x1)
    ff = math.exp(log_density_f_theta(x2 - x1, 1.0) + log_density_f_theta(y2 - y1, 1.0))
    assert eval_pV((x1, y1), (x2, y2), vtable, 1.0) == pytest.approx(ratio * ff, rel=1e-15)


def test_envelope_never_exceeded(seq3):
    assert seq3.diagnostics["envelope_exceedances"] == 0
    assert np.all(seq3.s1[:, 0] == 0.0)


def test_first_step_marginal(vtable, seq3):
    grid, cdf = simpson_cdf_table(lambda y: np.log(np.maximum(eval_p0V(y, vtable, 1.0), 1e-300)), -70.0, 7.0)
    F = cdf_from_table(grid, cdf / cdf[-1])
    assert ks_vs_cdf(EmpiricalDistribution(seq3.s2[:, 0]), F) <= 0.01


def test_soft_ordering(seq3):
    for k in range(8):
        assert np.mean(seq3.s2[:, k] - seq3.s1[:, k] > 4.0) < 1e-3


def test_markov_property(seq3):
    # given the state at step 2, the next increment should not depend on S2up(1)
    s1, s2 = seq3.s1, seq3.s2
    inc = s1[:, 2] - s1[:, 1]
    gap = s2[:, 1] - s1[:, 1]
    edges = np.quantile(gap, [0.0, 0.25, 0.5, 0.75, 1.0])
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (gap >= lo) & (gap <= hi)
        past = s2[sel, 0]
        split = past > np.median(past)
        res = ks_two_sample(inc[sel][split], inc[sel][~split], level=1e-3)
        assert res.passed


def test_rows_records(vtable):
    with pytest.warns(RuntimeWarning):
        s = sample_lg_prefix(2, vtable, 1.0, 1.0, 3, RngStream(5))
    rows = list(s.rows())
    assert len(rows) == 6 and rows[0][:2] == (0, 1) and rows[1][:2] == (0, 2)


def test_errors(vtable):
    bad = VTable.from_dict({**vtable.to_dict(), "accepted": False})
    with pytest.raises(ParameterError):
        sample_lg_prefix(2, bad, 1.0, 1.0, 10, RngStream(0))
    with pytest.raises(ParameterError):
        sample_sequential_pv(2, vtable, 2.0, 1.0, 10, RngStream(0))
    with pytest.raises(ParameterError):
        sample_sequential_pv(0, vtable, 1.0, 1.0, 10, RngStream(0))


def test_rejection_cap(vtable, monkeypatch):
    monkeypatch.setattr(lc, "MAX_REJECTIONS", 1)
    with pytest.raises(SamplerError):
        sample_sequential_pv(4, vtable, 1.0, 1.0, 100, RngStream(0))
