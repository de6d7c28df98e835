"""Sparse field algebra and packed-coordinate bookkeeping."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochgrowth.lattice import (
    BudgetError,
    WeightField,
    convolve,
    coord_limit,
    initial_state,
    inner_product,
    normalize,
    pack_sites,
    total_mass,
    unpack_sites,
)


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for dim in (1, 2, 3, 4):
        lim = coord_limit(dim)
        coords = rng.integers(-lim, lim, size=(200, dim))
        keys = pack_sites(coords, dim)
        assert np.array_equal(unpack_sites(keys, dim), coords)


def test_pack_is_injective_on_distinct_sites():
    pts = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [1, -1]])
    keys = pack_sites(pts, 2)
    assert len(np.unique(keys)) == len(pts)


def test_pack_rejects_out_of_range():
    lim = coord_limit(2)
    with pytest.raises(ValueError):
        pack_sites(np.array([[lim + 1, 0]]), 2)


def test_from_pairs_aggregates_duplicates():
    f = WeightField.from_pairs(
        np.array([[1], [1], [2]]), np.array([0.5, 0.25, 1.0]), 1
    )
    assert f.as_dict() == {(1,): 0.75, (2,): 1.0}


def test_from_dict_drops_zero_weights():
    f = WeightField.from_dict({(0,): 1.0, (3,): 0.0}, 1)
    assert f.as_dict() == {(0,): 1.0}


def test_point_and_total():
    f = WeightField.point((2, -1), 2, weight=3.0)
    assert len(f) == 1 and f.total() == 3.0
    assert f.get((2, -1)) == 3.0 and f.get((0, 0)) == 0.0


def test_empty_field():
    f = WeightField.empty(3)
    assert len(f) == 0 and f.total() == 0.0 and total_mass(f) == 0.0


def test_convolution_known_values():
    # (delta_{-1} + delta_{+1})/2 squared: the two-step walk law
    step = WeightField.from_dict({(-1,): 0.5, (1,): 0.5}, 1)
    two = convolve(step, step)
    assert two.as_dict() == {(-2,): 0.25, (0,): 0.5, (2,): 0.25}


def test_inner_product_matches_dict_sum():
    f = WeightField.from_dict({(0,): 0.5, (1,): 0.25, (2,): 0.25}, 1)
    g = WeightField.from_dict({(1,): 2.0, (3,): 5.0}, 1)
    assert inner_product(f, g) == pytest.approx(0.25 * 2.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=-40, max_value=40),
            st.floats(min_value=0.01, max_value=5.0, allow_nan=False),
        ),
        min_size=1,
        max_size=12,
        unique_by=lambda kv: kv[0],
    ),
    st.lists(
        st.tuples(
            st.integers(min_value=-40, max_value=40),
            st.floats(min_value=0.01, max_value=5.0, allow_nan=False),
        ),
        min_size=1,
        max_size=12,
        unique_by=lambda kv: kv[0],
    ),
)
def test_convolution_mass_is_multiplicative(fa, fb):
    f = WeightField.from_dict({(x,): w for x, w in fa}, 1)
    g = WeightField.from_dict({(x,): w for x, w in fb}, 1)
    h = convolve(f, g)
    assert h.total() == pytest.approx(f.total() * g.total(), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=-30, max_value=30),
            st.floats(min_value=0.001, max_value=9.0, allow_nan=False),
        ),
        min_size=1,
        max_size=10,
        unique_by=lambda kv: kv[0],
    )
)
def test_normalize_produces_unit_mass(items):
    f = WeightField.from_dict({(x,): w for x, w in items}, 1)
    state = normalize(f, 0.0, 1)
    assert not state.extinct
    assert state.rho.total() == pytest.approx(1.0, abs=1e-12)
    assert state.log_mass == pytest.approx(math.log(f.total()), rel=1e-12)


def test_normalize_empty_is_extinct_and_absorbing():
    state = normalize(WeightField.empty(2), -0.3, 5)
    assert state.extinct and state.log_mass == -math.inf
    assert state.support_size() == 0


def test_initial_state_is_point_mass_at_origin():
    st0 = initial_state(3)
    assert st0.time == 0 and st0.log_mass == 0.0
    assert st0.rho.as_dict() == {(0, 0, 0): 1.0}


def test_initial_state_custom_site():
    st0 = initial_state(2, site=(4, -2))
    assert st0.rho.as_dict() == {(4, -2): 1.0}


def test_scaled_preserves_support():
    f = WeightField.from_dict({(0,): 1.0, (2,): 3.0}, 1)
    g = f.scaled(0.5)
    assert g.as_dict() == {(0,): 0.5, (2,): 1.5}


def test_budget_error_is_runtime_error():
    assert issubclass(BudgetError, RuntimeError)
