"""Difference-walk return series, collision estimates, threshold selection."""

import math

import numpy as np
import pytest

from stochgrowth.lattice import BudgetError
from stochgrowth.models import build_model, kernel_from_weights
from stochgrowth.collision import (
    collision_kernel,
    collision_series,
    default_horizon,
    difference_walk_law,
    finite_collision_sum,
    geometric_fit,
    peak_return_ratio,
    pi_monte_carlo,
    select_t0,
    series_evaluator,
)


def _nn_kernel(dim=1):
    return build_model("osp", dim, p=0.6).mean_kernel()


# -- kernels ------------------------------------------------------------------


def test_collision_kernel_simple_walk():
    # normalized difference of two +-1 walks: {-2: 1/4, 0: 1/2, 2: 1/4}
    b = collision_kernel(_nn_kernel())
    assert b.as_dict() == pytest.approx({(-2,): 0.25, (0,): 0.5, (2,): 0.25})
    assert b.total() == pytest.approx(1.0, abs=1e-15)


def test_collision_kernel_independent_of_scale():
    # only the normalized walk law enters
    k1 = kernel_from_weights({(-1,): 0.2, (1,): 0.2}, 1)
    k2 = kernel_from_weights({(-1,): 0.9, (1,): 0.9}, 1)
    assert collision_kernel(k1).as_dict() == pytest.approx(
        collision_kernel(k2).as_dict()
    )


def test_difference_walk_law_two_steps():
    law = difference_walk_law(_nn_kernel(), 2)
    # convolution square of {1/4, 1/2, 1/4} on the even sublattice
    assert law.get((0,)) == pytest.approx(0.375)
    assert law.get((4,)) == pytest.approx(0.0625)
    assert law.total() == pytest.approx(1.0, abs=1e-12)


def test_default_horizons():
    assert default_horizon(1) == 10_000
    assert default_horizon(2) == 10_000
    assert default_horizon(3) == 400


# -- series evaluators ----------------------------------------------------------


def test_partial_sum_seven_steps_exact():
    # sum of central binomial returns C(2t,t)/4^t for t <= 7
    ev = series_evaluator(_nn_kernel(), 7, method="direct")
    assert ev.partial_sum(7) == pytest.approx(2.14208984375, abs=1e-12)
    hand = sum(math.comb(2 * t, t) / 4.0 ** t for t in range(1, 8))
    assert ev.partial_sum(7) == pytest.approx(hand, abs=1e-12)


def test_methods_agree_on_overlapping_range():
    kern = _nn_kernel()
    direct = series_evaluator(kern, 50, method="direct")
    spectral = series_evaluator(kern, 50, method="spectral", rel_tol=1e-9)
    for t in (1, 5, 17, 50):
        assert direct.partial_sum(t) == pytest.approx(
            spectral.partial_sum(t), abs=1e-12
        )


def test_partial_sums_monotone_and_growing():
    ev = series_evaluator(_nn_kernel(), 4096)
    sums = [ev.partial_sum(t) for t in (64, 256, 1024, 4096)]
    assert all(b > a for a, b in zip(sums, sums[1:]))
    # doubling the horizon strictly increases the recurrent-walk sum
    assert sums[-1] > sums[-2] + 0.1


def test_frozen_series_values_d1():
    prof = collision_series(_nn_kernel())
    assert prof.horizon == 10_000
    assert prof.total == pytest.approx(111.842148, abs=1e-4)
    assert prof.pi_series == pytest.approx(0.991138, abs=1e-5)
    assert prof.method == "direct"
    assert np.all(np.diff(prof.partial_sums) > 0)


def test_frozen_series_values_d2():
    prof = collision_series(_nn_kernel(2))
    assert prof.method == "spectral"
    assert prof.total == pytest.approx(2.998042, abs=1e-4)
    assert prof.pi_series == pytest.approx(0.749878, abs=1e-5)
    assert prof.alias_bound <= 1e-5


def test_trapped_walk_series_is_time():
    # a deterministic one-step kernel collides every step: b = delta_0
    kern = kernel_from_weights({(1,): 1.0}, 1)
    ev = series_evaluator(kern, 100)
    assert ev.partial_sum(100) == pytest.approx(100.0, abs=1e-12)


def test_direct_budget_error():
    with pytest.raises(BudgetError):
        series_evaluator(_nn_kernel(3), 10_000, method="direct", max_entries=10_000)


def test_profile_serializes():
    prof = collision_series(_nn_kernel(), horizon=64)
    doc = prof.to_dict()
    assert doc["horizon"] == 64 and len(doc["partial_sums"]) == len(doc["checkpoints"])


# -- Monte Carlo estimate --------------------------------------------------------


def test_pi_monte_carlo_agrees_with_series():
    kern = _nn_kernel()
    est = pi_monte_carlo(kern, 2000, 2000, seed=31)
    prof = collision_series(kern, horizon=2000)
    allowance = (est.ci_high - est.ci_low) / 2 + max(prof.truncation_drift, 0.0)
    assert abs(est.pi_hat - prof.pi_series) <= allowance
    assert est.ci_low <= est.pi_hat <= est.ci_high
    assert est.hits == int(np.sum(est.collision_counts > 0))


def test_pi_monte_carlo_deterministic_kernel():
    kern = kernel_from_weights({(1,): 1.0}, 1)
    est = pi_monte_carlo(kern, 200, 50, seed=1)
    assert est.pi_hat == 1.0 and est.hits == 200


def test_pi_monte_carlo_reproducible():
    kern = _nn_kernel()
    a = pi_monte_carlo(kern, 500, 200, seed=7)
    b = pi_monte_carlo(kern, 500, 200, seed=7)
    assert a.pi_hat == b.pi_hat
    assert np.array_equal(a.collision_counts, b.collision_counts)


def test_pi_monte_carlo_needs_enough_walks():
    with pytest.raises(ValueError):
        pi_monte_carlo(_nn_kernel(), 50, 100, seed=0)


def test_count_survival_matches_geometric_decay():
    # P(V >= k) = pi^k for the recurrent walk; check the first few k
    kern = _nn_kernel()
    est = pi_monte_carlo(kern, 4000, 4000, seed=2026)
    ks, fracs = est.count_survival(4)
    for k, frac in zip(ks, fracs):
        pred = est.pi_hat ** k
        se = math.sqrt(pred * (1 - pred) / est.n_walks) + 1e-9
        assert abs(frac - pred) <= 6 * se + 0.01, (k, frac, pred)


def test_geometric_fit_accepts_geometric_counts():
    rng = np.random.default_rng(5)
    pi = 0.7
    counts = rng.geometric(1 - pi, size=4000) - 1  # support {0, 1, ...}
    fit = geometric_fit(counts)
    assert fit.pvalue > 0.05
    assert fit.observed.sum() == 4000


def test_geometric_fit_rejects_wrong_law():
    rng = np.random.default_rng(6)
    counts = rng.poisson(3.0, size=4000)
    fit = geometric_fit(counts)
    assert fit.pvalue < 1e-4


# -- threshold selection -----------------------------------------------------------


def test_select_t0_hand_value():
    # gamma = 2, eps = 1: threshold 2, first crossing at t = 7
    sel = select_t0(_nn_kernel(), 2.0)
    assert sel.status == "found" and sel.t0 == 7
    assert sel.epsilon == 1.0
    assert sel.threshold == pytest.approx(2.0)


def test_select_t0_minimality():
    ev = series_evaluator(_nn_kernel(), 100)
    sel = select_t0(_nn_kernel(), 2.0, horizon=100, evaluator=ev)
    assert ev.partial_sum(sel.t0) >= sel.threshold
    assert ev.partial_sum(sel.t0 - 1) < sel.threshold


def test_select_t0_infeasible_below_one():
    sel = select_t0(_nn_kernel(), 0.9)
    assert sel.status == "infeasible" and sel.t0 is None


def test_select_t0_high_dim_feasibility_gate():
    # d = 3: pi ~ 0.34, so gamma = 1.1 < 1/pi can never cross
    sel = select_t0(_nn_kernel(3), 1.1)
    assert sel.status == "infeasible"
    # very large gamma crosses inside the default horizon
    sel2 = select_t0(_nn_kernel(3), 50.0)
    assert sel2.status == "found"
    assert sel2.epsilon in (1.0, 0.5, 0.1, 0.01)


def test_select_t0_horizon_exhausted_d1():
    # d = 1 keeps eps = 1; a tiny horizon cannot reach threshold 2
    sel = select_t0(_nn_kernel(), 2.0, horizon=3)
    assert sel.status == "horizon_exhausted" and sel.t0 is None


def test_finite_collision_sum_mass():
    # g stacks the full t-step laws for t <= t0: mass t0, origin value s_t0
    kern = _nn_kernel()
    g = finite_collision_sum(kern, 7)
    ev = series_evaluator(kern, 7)
    assert g.total() == pytest.approx(7.0, abs=1e-12)
    assert g.get((0,)) == pytest.approx(ev.partial_sum(7), abs=1e-12)
    assert g.get((0,)) > g.get((2,)) > 0


# -- peak return ratio ----------------------------------------------------------


def test_peak_return_ratio_d1():
    dom = peak_return_ratio(_nn_kernel(), 50)
    assert dom.max_ratio == pytest.approx(1.4107, abs=2e-3)
    assert dom.ratios.min() >= 1.0 - 1e-12


def test_peak_return_ratio_deterministic_kernel():
    kern = kernel_from_weights({(1,): 1.0}, 1)
    dom = peak_return_ratio(kern, 20)
    assert dom.max_ratio == pytest.approx(1.0, abs=1e-12)
