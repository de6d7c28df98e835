"""Pathwise product bounds and small-instance moment inequalities.

The normalized total mass is a product of nonnegative per-step factors
1 + dY_t with dY_t >= -1. Everything here is deterministic given the
increments: the penalty surrogate f(u) = u^2 / (2 + u), the product bound

    X_t <= exp( sum dY_s  -  (1/4) sum f(dY_s) ),

the elementary two-sided factor estimate 0 <= 1 - (1+u)e^{-u} <= (e/2)u^2,
and an exhaustive rational-arithmetic check of the correlation inequality
for ratios U_1 U_2 / U^2 of independent nonnegative variables. The last one
is exact: both sides are computed as fractions over the finite product law,
so a violation can only ever mean an implementation bug.

Conditional moments of dY at a frozen density are verified by resampling
fresh disorder at fixed rho; they are not observable along a single path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import WeightField
from .models import LatticeModel, frozen_step_factors
from .observables import replica_overlap

_CH_OUTCOME_BUDGET = 1_000_000


def f_surrogate(u):
    """Penalty f(u) = u^2 / (2 + u) for u >= -1; f(-1) = 1 by the formula."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr < -1.0):
        raise ValueError("f surrogate is only defined on [-1, inf)")
    out = arr * arr / (2.0 + arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


@dataclass
class FactorBounds:
    """Pointwise check of 0 <= 1 - (1+u)e^{-u} <= (e/2) u^2."""

    u: np.ndarray
    middle: np.ndarray
    cap: np.ndarray
    ok: np.ndarray

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.ok))


def elementary_factor_bounds(u, *, abs_slack: float = 1e-14) -> FactorBounds:
    """Verify the two-sided estimate on 1 - (1+u)e^{-u} for u >= -1.

    The middle expression is evaluated as -expm1(-u) - u exp(-u); both terms
    are O(u) near zero, so the cancellation leaves full relative precision
    where the quadratic cap gets tight.
    """
    arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if np.any(arr < -1.0):
        raise ValueError("bounds hold on [-1, inf) only")
    middle = -np.expm1(-arr) - arr * np.exp(-arr)
    cap = 0.5 * math.e * arr * arr
    ok = (middle >= -abs_slack) & (middle <= cap * (1.0 + 1e-12) + abs_slack)
    return FactorBounds(arr, middle, cap, ok)


@dataclass
class MartingalePath:
    """Increments dY_t >= -1 and the running products X_t = prod (1 + dY_s)."""

    increments: np.ndarray
    products: np.ndarray

    @classmethod
    def from_increments(cls, increments) -> "MartingalePath":
        inc = np.asarray(increments, dtype=np.float64)
        if inc.ndim != 1:
            raise ValueError("increments must be a 1-d sequence")
        if np.any(~np.isfinite(inc)) or np.any(inc < -1.0):
            raise ValueError("increments must be finite and >= -1")
        return cls(inc, np.cumprod(1.0 + inc))

    @classmethod
    def from_step_factors(cls, factors) -> "MartingalePath":
        """Build from per-step mass factors U_t = exp(delta log mass).

        A trailing run of NaNs (the recorder's post-extinction filler) is
        trimmed; the extinction step itself (factor 0) is kept.
        """
        arr = np.asarray(factors, dtype=np.float64)
        bad = ~np.isfinite(arr)
        if np.any(bad):
            first = int(np.argmax(bad))
            if not np.all(bad[first:]):
                raise ValueError("non-finite step factor inside the path")
            arr = arr[:first]
        return cls.from_increments(arr - 1.0)

    def validate(self, rel: float = 1e-12) -> bool:
        ref = np.cumprod(1.0 + self.increments)
        scale = np.maximum(np.abs(ref), 1.0)
        return bool(np.all(np.abs(self.products - ref) <= rel * scale))


@dataclass
class ProductBoundReport:
    """Per-time verdict of X_t <= exp(Y_t - (1/4) sum f(dY))."""

    ok: np.ndarray
    log_margin: np.ndarray   # bound minus log X_t; +inf once X_t = 0
    min_margin: float
    argmin_time: int         # 1-based; 0 when the path is empty

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.ok))


def pathwise_product_bound(
    path: MartingalePath, *, rel_slack: float = 1e-10
) -> ProductBoundReport:
    """Check the deterministic product bound at every time along the path.

    Works in the log domain: log X_t = sum log1p(dY_s) while X_t > 0, and
    the inequality is vacuously true from the first zero factor on. The
    per-step form log1p(u) <= u - f(u)/4 makes the cumulative margins
    nondecreasing, so a violation anywhere is a genuine arithmetic bug,
    not accumulated rounding.
    """
    inc = path.increments
    n = len(inc)
    if n == 0:
        return ProductBoundReport(np.ones(0, dtype=bool), np.empty(0), math.inf, 0)
    bound = np.cumsum(inc - 0.25 * f_surrogate(inc))
    with np.errstate(divide="ignore"):
        log_steps = np.log1p(inc)
    log_x = np.cumsum(log_steps)
    dead = np.cumsum(inc <= -1.0) > 0
    margin = np.where(dead, math.inf, bound - log_x)
    slack = rel_slack * (1.0 + np.abs(bound))
    ok = margin >= -slack
    finite = np.where(dead, math.nan, margin)
    if np.all(np.isnan(finite)):
        return ProductBoundReport(ok, margin, math.inf, 1)
    arg = int(np.nanargmin(finite))
    return ProductBoundReport(ok, margin, float(finite[arg]), arg + 1)


DiscreteLaw = list[tuple[Fraction, Fraction]]


def _parse_law(law) -> DiscreteLaw:
    atoms = []
    for value, prob in law:
        v, p = Fraction(value), Fraction(prob)
        if v < 0:
            raise ValueError("law values must be >= 0")
        if p < 0:
            raise ValueError("probabilities must be >= 0")
        if p > 0:
            atoms.append((v, p))
    if not atoms:
        raise ValueError("law must carry positive mass")
    if sum(p for _, p in atoms) != 1:
        raise ValueError("probabilities must sum to 1 exactly")
    return atoms


def _law_moment(law: DiscreteLaw, power: int) -> Fraction:
    return sum((v**power) * p for v, p in law)


@dataclass
class CHReport:
    """Exact two-sided data of the ratio correlation inequalities.

    cross: E[U1 U2 / U^2 ; U > 0] >= m1 m2 - 2 m2 var(U1) - 2 m1 var(U2)
    self_: E[U1^2  / U^2 ; U > 0] >= E[U1^2](1 + 2 m1) - 2 E[U1^3]
    All quantities are exact fractions.
    """

    lhs_cross: Fraction
    rhs_cross: Fraction
    lhs_self: Fraction
    rhs_self: Fraction

    @property
    def ok_cross(self) -> bool:
        return self.lhs_cross >= self.rhs_cross

    @property
    def ok_self(self) -> bool:
        return self.lhs_self >= self.rhs_self

    @property
    def all_ok(self) -> bool:
        return self.ok_cross and self.ok_self


def ch_inequality_check(laws) -> CHReport:
    """Exhaustively verify both ratio inequalities for given discrete laws.

    laws: n >= 2 finite nonnegative laws as (value, probability) pairs with
    exact rational entries; the means must sum to 1 exactly. Both sides of
    each inequality are enumerated over the product of atoms in rational
    arithmetic, so the comparison carries no rounding at all.
    """
    parsed = [_parse_law(law) for law in laws]
    n = len(parsed)
    if n < 2:
        raise ValueError("need at least two independent variables")
    outcomes = 1
    for law in parsed:
        outcomes *= len(law)
        if outcomes > _CH_OUTCOME_BUDGET:
            raise ValueError(f"product law exceeds {_CH_OUTCOME_BUDGET} outcomes")
    means = [_law_moment(law, 1) for law in parsed]
    if sum(means) != 1:
        raise ValueError("law means must sum to 1 exactly")
    lhs_cross = Fraction(0)
    lhs_self = Fraction(0)
    for combo in itertools.product(*parsed):
        prob = Fraction(1)
        for _, p in combo:
            prob *= p
        u = sum(v for v, _ in combo)
        if u == 0:
            continue
        u1, u2 = combo[0][0], combo[1][0]
        usq = u * u
        lhs_cross += prob * u1 * u2 / usq
        lhs_self += prob * u1 * u1 / usq
    m1, m2 = means[0], means[1]
    var1 = _law_moment(parsed[0], 2) - m1 * m1
    var2 = _law_moment(parsed[1], 2) - m2 * m2
    rhs_cross = m1 * m2 - 2 * m2 * var1 - 2 * m1 * var2
    rhs_self = _law_moment(parsed[0], 2) * (1 + 2 * m1) - 2 * _law_moment(parsed[0], 3)
    return CHReport(lhs_cross, rhs_cross, lhs_self, rhs_self)


@dataclass
class BracketPoint:
    """Conditional moment estimates at one frozen density."""

    overlap: float            # R of the frozen density
    second_moment: float      # E[(dY)^2 | rho], Monte Carlo
    second_se: float
    third_moment: float       # E[(dY)^3 | rho], Monte Carlo
    third_se: float
    exact_second: float       # closed-form conditional variance


@dataclass
class MomentBracket:
    """Empirical bracket constants of conditional dY moments against R.

    c_upper bounds max(m2, |m3|) / R from above over the probed states;
    c_lower bounds m2 / R from below. A strictly positive lower constant is
    the quantitative content: the step noise cannot vanish faster than the
    overlap.
    """

    points: list[BracketPoint]
    c_upper: float
    c_lower: float
    c_lower_tstat: float      # min over states of m2 / se(m2)

    @property
    def positive(self) -> bool:
        return self.c_lower > 0.0


def overlap_moment_bracket(
    model: LatticeModel,
    states: list[WeightField],
    n_samples: int = 20_000,
    seed: int = 0,
) -> MomentBracket:
    """Monte Carlo conditional moments of dY at frozen densities.

    For each density, fresh disorder is resampled n_samples times with rho
    held fixed; the second moment is also compared against the model's
    closed-form conditional variance (the caller asserts agreement). The
    ratio constants are reported against the raw overlap R.
    """
    points = []
    for i, rho in enumerate(states):
        u = frozen_step_factors(model, rho, n_samples, seed=seed + i)
        dy = u - 1.0
        m2 = float(np.mean(dy**2))
        m3 = float(np.mean(dy**3))
        se2 = float(np.std(dy**2, ddof=1) / math.sqrt(n_samples))
        se3 = float(np.std(dy**3, ddof=1) / math.sqrt(n_samples))
        points.append(
            BracketPoint(
                overlap=replica_overlap(rho),
                second_moment=m2,
                second_se=se2,
                third_moment=m3,
                third_se=se3,
                exact_second=model.conditional_step_variance(rho),
            )
        )
    ratios_up = [max(p.second_moment, abs(p.third_moment)) / p.overlap for p in points]
    ratios_lo = [p.second_moment / p.overlap for p in points]
    tstats = [
        p.second_moment / p.second_se if p.second_se > 0 else math.inf for p in points
    ]
    return MomentBracket(
        points=points,
        c_upper=max(ratios_up),
        c_lower=min(ratios_lo),
        c_lower_tstat=min(tstats),
    )
