"""Localization observables and ensemble statistics."""

import math

import numpy as np
import pytest

from stochgrowth.lattice import WeightField
from stochgrowth.models import build_model, kernel_from_weights
from stochgrowth.observables import (
    InsufficientDataError,
    TrajectoryRecord,
    decay_regression,
    localization_functional,
    localization_summary,
    max_density,
    replica_overlap,
    smoothed_density,
    smoothed_overlap,
    trajectory_decay_slope,
    wilson_interval,
)


def _uniform(k):
    return WeightField.from_dict({(i,): 1.0 / k for i in range(k)}, 1)


def test_overlap_of_point_mass_is_one():
    assert replica_overlap(WeightField.point((0,), 1)) == 1.0


def test_overlap_of_uniform_density():
    for k in (2, 5, 40):
        assert replica_overlap(_uniform(k)) == pytest.approx(1.0 / k)


def test_peak_density():
    f = WeightField.from_dict({(0,): 0.6, (1,): 0.4}, 1)
    assert max_density(f) == 0.6


def test_overlap_bracketed_by_peak():
    rng = np.random.default_rng(4)
    for _ in range(50):
        w = rng.random(8)
        w /= w.sum()
        f = WeightField.from_dict({(i,): float(v) for i, v in enumerate(w)}, 1)
        r, m = replica_overlap(f), max_density(f)
        assert m * m <= r + 1e-15 and r <= m + 1e-15


def test_smoothed_density_is_kernel_convolution():
    kern = build_model("osp", 1, p=0.6).mean_kernel()
    f = WeightField.point((0,), 1)
    sm = smoothed_density(f, kern)
    assert sm.as_dict() == pytest.approx({(-1,): 0.5, (1,): 0.5})
    assert smoothed_overlap(f, kern) == pytest.approx(0.5)


def test_smoothed_overlap_brackets():
    kern = build_model("osp", 1, p=0.6).mean_kernel()
    ratio = kern.total ** 2 / kern.sq_total
    rng = np.random.default_rng(9)
    for _ in range(50):
        w = rng.random(6)
        w /= w.sum()
        f = WeightField.from_dict({(2 * i,): float(v) for i, v in enumerate(w)}, 1)
        r = replica_overlap(f)
        r1 = smoothed_overlap(f, kern)
        assert r1 <= r + 1e-12
        assert r <= ratio * r1 + 1e-12


def test_localization_functional_point_kernel():
    # g = delta_0 turns the functional into the plain overlap
    g = kernel_from_weights({(0,): 1.0}, 1).field
    f = _uniform(4)
    assert localization_functional(f, g) == pytest.approx(replica_overlap(f))


def test_localization_functional_bounded_by_total_mass():
    g = WeightField.from_dict({(0,): 1.0, (1,): 0.5, (-1,): 0.5}, 1)
    rng = np.random.default_rng(2)
    for _ in range(30):
        w = rng.random(5)
        w /= w.sum()
        f = WeightField.from_dict({(i,): float(v) for i, v in enumerate(w)}, 1)
        x = localization_functional(f, g)
        assert abs(x) <= g.total() * replica_overlap(f) + 1e-12


def _record(replica, t_max, overlap, log_mass, survived, extinction_time=None):
    overlap = np.asarray(overlap, dtype=np.float64)
    log_mass = np.asarray(log_mass, dtype=np.float64)
    n = t_max + 1
    support = np.where(np.isfinite(log_mass), 1, 0).astype(np.int64)
    with np.errstate(invalid="ignore"):
        factors = np.exp(np.diff(log_mass))
    factors[np.isnan(factors)] = 0.0
    return TrajectoryRecord(
        replica=replica,
        t_max=t_max,
        survived=survived,
        extinction_time=extinction_time,
        overlap=overlap,
        peak=np.sqrt(overlap),
        smoothed=overlap * 0.9,
        log_mass=log_mass,
        support=support,
        overlap_sum=np.cumsum(overlap),
        overlap_32_sum=np.cumsum(overlap ** 1.5),
        step_factors=factors,
    )


def test_record_final_log_mass_and_window():
    t = 10
    rec = _record(0, t, np.linspace(1, 0.5, t + 1), np.linspace(0, -2, t + 1), True)
    assert rec.final_log_mass() == pytest.approx(-2.0)
    assert rec.window_max_overlap(0.5) == pytest.approx(rec.overlap[5:].max())
    assert rec.heavy_tail_ratio() == pytest.approx(
        rec.overlap_32_sum[-1] / rec.overlap_sum[-1]
    )


def test_decay_slope_tracks_linear_relation():
    # ln mass = -0.5 * cumulative overlap exactly: slope 0.5
    t = 120
    overlap = np.full(t + 1, 0.3)
    log_mass = -0.5 * np.cumsum(overlap)
    rec = _record(0, t, overlap, log_mass, True)
    slope, ok = trajectory_decay_slope(rec)
    assert ok and slope == pytest.approx(0.5, rel=1e-9)


def test_decay_regression_needs_enough_survivors():
    t = 60
    recs = [
        _record(i, t, np.full(t + 1, 0.2), -0.4 * np.cumsum(np.full(t + 1, 0.2)), True)
        for i in range(12)
    ]
    reg = decay_regression(recs)
    assert reg.applicable and reg.n_used == 12
    assert reg.median_slope == pytest.approx(0.4, rel=1e-9)
    assert reg.fraction_positive == 1.0
    with pytest.raises(InsufficientDataError):
        decay_regression(recs[:5])


def test_localization_summary_counts():
    t = 40
    hot = _record(0, t, np.full(t + 1, 0.6), np.zeros(t + 1), True)
    cold = _record(1, t, np.full(t + 1, 0.05), np.zeros(t + 1), True)
    dead = _record(2, t, np.zeros(t + 1), np.full(t + 1, -np.inf), False, 1)
    summ = localization_summary([hot, cold, dead], thresholds=(0.1, 0.5))
    assert summ.n_records == 3 and summ.n_survivors == 2
    assert tuple(summ.survivor_exceedance) == (0.5, 0.5)
    assert tuple(summ.overall_exceedance) == pytest.approx((1 / 3, 1 / 3))


def test_wilson_interval_properties():
    lo, hi = wilson_interval(50, 100)
    assert 0.0 <= lo < 0.5 < hi <= 1.0
    lo0, hi0 = wilson_interval(0, 50)
    assert lo0 == pytest.approx(0.0, abs=1e-15) and hi0 > 0.0
    lo1, hi1 = wilson_interval(50, 50)
    assert hi1 == 1.0 and lo1 < 1.0
    # shrinks like 1/sqrt(n)
    w1 = np.subtract(*wilson_interval(500, 1000)[::-1])
    w2 = np.subtract(*wilson_interval(5000, 10000)[::-1])
    assert w2 < w1 < 4 * w2
