"""Model families: kernels, closed-form constants, sampling laws."""

import math

import numpy as np
import pytest

from stochgrowth.disorder import DisorderStream
from stochgrowth.lattice import initial_state
from stochgrowth.models import (
    BUILTIN_KINDS,
    build_model,
    frozen_step_factors,
    kernel_from_weights,
    onestep_mass_factors,
)

STANDARD = {
    "osp": dict(p=0.7),
    "gosp": dict(p=0.55, q=0.3),
    "gobp": dict(p=0.4, q=0.25),
    "dpre": dict(beta=0.6),
    "bcpp": dict(p=0.5, q=0.4),
    "mult": dict(noise_sigma=0.4),
}


def _model(kind, dim=1):
    return build_model(kind, dim, **STANDARD[kind])


# -- mean kernels -----------------------------------------------------------


def test_osp_mean_kernel():
    m = build_model("osp", 1, p=0.7)
    kern = m.mean_kernel()
    assert kern.field.as_dict() == {(-1,): 0.7, (1,): 0.7}
    assert kern.total == pytest.approx(1.4)
    assert kern.range_ == 1 and kern.irreducible


def test_gosp_mean_kernel_has_diagonal():
    m = build_model("gosp", 2, p=0.5, q=0.2)
    kern = m.mean_kernel()
    d = kern.field.as_dict()
    assert d[(0, 0)] == pytest.approx(0.2)
    assert all(d[u] == pytest.approx(0.5) for u in ((1, 0), (-1, 0), (0, 1), (0, -1)))
    assert kern.total == pytest.approx(4 * 0.5 + 0.2)


def test_dpre_mean_kernel_uniform_neighbors():
    # entries carry the 1/(2d) walk factor, so |a| = e^{beta^2/2}
    m = build_model("dpre", 1, beta=0.6)
    kern = m.mean_kernel()
    vals = list(kern.field.as_dict().values())
    assert len(vals) == 2 and vals[0] == pytest.approx(vals[1])
    assert kern.total == pytest.approx(math.exp(0.18))


def test_bcpp_mean_kernel():
    m = build_model("bcpp", 1, p=0.5, q=0.4)
    d = m.mean_kernel().field.as_dict()
    assert d[(0,)] == pytest.approx(0.4)
    assert d[(1,)] == pytest.approx(0.25)  # p / (2d)
    assert m.mean_kernel().total == pytest.approx(0.9)


def test_kernel_from_weights_accepts_reducible():
    kern = kernel_from_weights({(2,): 1.0}, 1)
    assert not kern.irreducible
    assert kern.total == 1.0


# -- closed-form constants [gamma and growth margin] -------------------------


def test_gamma_closed_forms():
    assert build_model("osp", 1, p=0.8).gamma() == pytest.approx(1.25)
    assert build_model("osp", 3, p=0.5).gamma() == pytest.approx(2.0)
    p, q, d = 0.55, 0.3, 1
    expected = 1 + (2 * d * p * (1 - p) + q * (1 - q)) / (2 * d * p + q) ** 2
    assert build_model("gosp", d, p=p, q=q).gamma() == pytest.approx(expected)
    assert build_model("gobp", d, p=p, q=q).gamma() == pytest.approx(expected)
    beta = 0.6
    assert build_model("dpre", 1, beta=beta).gamma() == pytest.approx(
        math.exp(beta ** 2)
    )  # e^{lambda(2b) - 2 lambda(b)} for the Gaussian law
    p, q = 0.5, 0.4
    expected = 1 + (p * (1 - p) + q * (1 - q)) / (p + q) ** 2
    assert build_model("bcpp", 1, p=p, q=q).gamma() == pytest.approx(expected)
    sigma = 0.4
    assert build_model("mult", 1, noise_sigma=sigma).gamma() == pytest.approx(
        math.exp(sigma ** 2)
    )


def test_gamma_exceeds_one_for_random_models():
    for kind in BUILTIN_KINDS:
        m = _model(kind)
        assert m.gamma() > 1.0, kind


def test_growth_margin_sign_matches_criterion():
    # 2dp < 1 certifies slow growth for the pure site model
    assert build_model("osp", 1, p=0.3).growth_log_margin() > 0
    assert build_model("osp", 1, p=0.8).growth_log_margin() < 0
    assert build_model("osp", 1, p=0.5).growth_log_margin() == pytest.approx(0.0, abs=1e-15)
    # Gaussian polymer: certificate iff beta^2 / 2 > ln(2d)
    crit = math.sqrt(2 * math.log(2))
    assert build_model("dpre", 1, beta=crit + 1e-6).growth_log_margin() > 0
    assert build_model("dpre", 1, beta=crit - 1e-6).growth_log_margin() < 0


def test_bernoulli_environment_gamma():
    rate, beta = 0.5, 0.7
    lam = lambda b: math.log(1 - rate + rate * math.exp(b))
    m = build_model("dpre", 1, beta=beta, env="bernoulli", env_rate=rate)
    assert m.gamma() == pytest.approx(math.exp(lam(2 * beta) - 2 * lam(beta)))


# -- covariance tables vs sampled columns ------------------------------------


def _empirical_second_moment(model, x, xt, y, n=20_000, seed=77):
    reps = np.arange(n, dtype=np.int64)
    ax = model.entry_batch(seed, reps, 1, x, y)
    axt = model.entry_batch(seed, reps, 1, xt, y)
    prod = ax * axt
    return prod.mean(), prod.std(ddof=1) / math.sqrt(n)


@pytest.mark.parametrize("kind", list(STANDARD))
def test_column_second_moment_matches_sampling(kind):
    m = _model(kind)
    y = (0,)
    pairs = [((-1,), (-1,)), ((-1,), (1,)), ((-1,), (0,)), ((0,), (0,))]
    for x, xt in pairs:
        exact = m.column_second_moment(x, xt, y)
        emp, se = _empirical_second_moment(m, x, xt, y)
        tol = 4.5 * se + 1e-12
        assert abs(emp - exact) <= tol, (
            f"{kind} E[A_{x}A_{xt}]: sampled {emp:.5f}, closed form {exact:.5f}"
        )


def test_shared_site_bit_within_column():
    # both neighbor entries of a GOSP column read one bit: products equal p
    m = build_model("gosp", 1, p=0.55, q=0.3)
    emp, se = _empirical_second_moment(m, (-1,), (1,), (0,))
    assert abs(emp - 0.55) <= 5 * se
    # bond version draws independent bits per entry: product is p^2
    mb = build_model("gobp", 1, p=0.55, q=0.3)
    emp_b, se_b = _empirical_second_moment(mb, (-1,), (1,), (0,))
    assert abs(emp_b - 0.55 ** 2) <= 5 * se_b


def test_dpre_second_moment_shared_environment():
    m = build_model("dpre", 1, beta=0.6)
    a = m.mean_kernel().field.get((1,))
    exact = m.gamma() * a * a
    emp, se = _empirical_second_moment(m, (-1,), (1,), (0,))
    assert abs(emp - exact) <= 5 * se


# -- one-step law -------------------------------------------------------------


@pytest.mark.parametrize("kind", list(STANDARD))
def test_mass_factor_mean_one(kind):
    # the normalized one-step mass factor has mean 1 by construction
    m = _model(kind)
    u = onestep_mass_factors(m, n=40_000, seed=5)
    se = u.std(ddof=1) / math.sqrt(len(u))
    assert abs(u.mean() - 1.0) <= 4.5 * se, f"{kind}: mean {u.mean():.4f} se {se:.4f}"
    assert (u >= 0).all()


@pytest.mark.parametrize("kind", list(STANDARD))
def test_normalized_mass_is_mean_one_after_three_steps(kind):
    m = _model(kind)
    n = 3000
    mass = np.zeros(n)
    for rep in range(n):
        st = initial_state(1)
        stream = DisorderStream(91, rep)
        for _ in range(3):
            if st.extinct:
                break
            st = m.step(st, stream)
        mass[rep] = 0.0 if st.extinct else math.exp(st.log_mass)
    se = mass.std(ddof=1) / math.sqrt(n)
    assert abs(mass.mean() - 1.0) <= 4.5 * se, f"{kind}: {mass.mean():.4f} +- {se:.4f}"


def test_conditional_step_variance_point_mass():
    m = build_model("dpre", 1, beta=0.6)
    delta = initial_state(1).rho
    # a point source spreads over 2d sites; the shared noise leaves
    # Var = (gamma - 1) * smoothed overlap = (gamma - 1) / (2d)
    assert m.conditional_step_variance(delta) == pytest.approx(
        (m.gamma() - 1.0) / 2.0
    )


def test_conditional_step_variance_matches_frozen_sampling():
    m = build_model("osp", 1, p=0.7)
    st = initial_state(1)
    stream = DisorderStream(3, 0)
    for _ in range(4):
        st = m.step(st, stream)
        if st.extinct:
            pytest.skip("replica went extinct; pick another seed")
    exact = m.conditional_step_variance(st.rho)
    u = frozen_step_factors(m, st.rho, 30_000, seed=12, t=st.time + 1)
    emp = u.var(ddof=1)
    # variance of the sample variance ~ (m4 - m2^2)/n
    m2 = u.var(ddof=1)
    m4 = ((u - u.mean()) ** 4).mean()
    se = math.sqrt(max(m4 - m2 * m2, 1e-20) / len(u))
    assert abs(emp - exact) <= 5 * se + 1e-12


# -- step mechanics -----------------------------------------------------------


def test_percolation_entries_are_binary():
    m = build_model("osp", 1, p=0.7)
    stream = DisorderStream(1, 0)
    vals = {m.matrix_entry(stream, 1, (0,), (y,)) for y in (-1, 1)}
    assert vals <= {0.0, 1.0}
    assert m.matrix_entry(stream, 1, (0,), (3,)) == 0.0


def test_step_advances_time_and_stays_normalized():
    for kind in BUILTIN_KINDS:
        m = _model(kind)
        st = initial_state(1)
        stream = DisorderStream(17, 0)
        for _ in range(5):
            if st.extinct:
                break
            st = m.step(st, stream)
            if not st.extinct:
                assert st.rho.total() == pytest.approx(1.0, abs=1e-12)
        assert st.time <= 5


def test_extinct_state_cannot_step():
    m = build_model("osp", 1, p=0.05)
    st = initial_state(1)
    stream = DisorderStream(0, 1)
    while not st.extinct:
        st = m.step(st, stream)
    with pytest.raises(ValueError):
        m.step(st, stream)


def test_dpre_never_goes_extinct():
    m = build_model("dpre", 1, beta=1.0)
    st = initial_state(1)
    stream = DisorderStream(8, 0)
    for _ in range(30):
        st = m.step(st, stream)
    assert not st.extinct and len(st.rho) == 31  # support grows one edge per step


# -- construction and flags ----------------------------------------------------


def test_build_model_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_model("osp", 1)  # p missing
    with pytest.raises(ValueError):
        build_model("nosuch", 1, p=0.5)
    with pytest.raises(ValueError):
        build_model("osp", 0, p=0.5)
    with pytest.raises(ValueError):
        build_model("osp", 1, p=1.5)
    with pytest.raises(ValueError):
        build_model("dpre", 1, beta=0.5, env="cauchy")


def test_degeneracy_flags_not_errors():
    assert build_model("osp", 1, p=1.0).degeneracies()
    assert build_model("gosp", 1, p=0.0, q=1.0).degeneracies()
    assert build_model("dpre", 1, beta=0.0).degeneracies()
    assert not build_model("osp", 1, p=0.7).degeneracies()
    assert not build_model("mult", 1, noise_sigma=0.4).degeneracies()


def test_params_round_trip_through_builder():
    # mult reports its kernel/noise descriptively, not as builder kwargs
    for kind in ("osp", "gosp", "gobp", "dpre", "bcpp"):
        m = _model(kind)
        again = build_model(kind, 1, **{
            k: v for k, v in m.params().items() if k not in ("kind", "dim")
        })
        assert type(again) is type(m)
        assert again.params() == m.params()
