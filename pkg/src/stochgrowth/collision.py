"""Collision probability of two independent mean-kernel walks.

Two walkers take i.i.d. steps from the normalized mean kernel. The law of
their difference after one step is the collision kernel b; the chance that
they ever occupy the same site again is encoded by the return probabilities
b_t(0) of the difference walk through the renewal identity

    1 + sum_{t >= 1} b_t(0) = 1 / (1 - pi).

The partial sums s_T of that series therefore give a monotone lower bound
pi >= s_T / (1 + s_T), exact in the limit. In one and two dimensions the
series diverges and pi = 1; from three dimensions on it converges.

Two independent evaluation routes are provided and cross-checked in tests:

* direct: dense iterated convolution of b, exact to float rounding, with a
  memory guard (the support grows like T^d);
* spectral: b_t(0) recovered as the average of the t-th power of the squared
  characteristic function of a walker step over a finite torus. Exact up to
  wrap-around aliasing, which is bounded explicitly (Bernstein tail bound)
  and sized below a requested tolerance before any value is trusted.

A quenched variant of the collision probability (the exponential-moment
version) has no finite-horizon estimator here and is intentionally out of
scope; only the annealed quantity above is computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .disorder import SLOT_PRIMARY, keyed_uniform
from .lattice import BudgetError, WeightField, convolve
from .models import MeanKernel
from .observables import wilson_interval

DEFAULT_HORIZON_LOW_DIM = 10_000
DEFAULT_HORIZON_HIGH_DIM = 400

# direct route: dense box entry and element-operation ceilings
_DIRECT_MAX_ENTRIES = 1 << 22
_DIRECT_MAX_OPS = int(4e9)
# spectral route: torus grid entry ceiling
_SPECTRAL_MAX_ENTRIES = int(4.5e7)


def default_horizon(dim: int) -> int:
    """Series horizon: long for the divergent dimensions, short above."""
    return DEFAULT_HORIZON_LOW_DIM if dim <= 2 else DEFAULT_HORIZON_HIGH_DIM


def _reflected(f: WeightField) -> WeightField:
    return WeightField.from_pairs(-f.coords, f.weights, f.dim)


def collision_kernel(kernel: MeanKernel) -> WeightField:
    """Step law of the difference of two independent normalized-kernel steps.

    b(x) = (1/|a|^2) sum_y a(y) a(y - x); symmetric by construction.
    """
    a_bar = kernel.normalized
    return convolve(a_bar, _reflected(a_bar))


def difference_walk_law(kernel: MeanKernel, t: int) -> WeightField:
    """Exact law of the difference walk after t steps (sparse, small t)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    b = collision_kernel(kernel)
    out = WeightField.point((0,) * kernel.field.dim, kernel.field.dim)
    for _ in range(t):
        out = convolve(out, b)
    return out


def _shift_views(shape: tuple[int, ...], offset: np.ndarray):
    src, dst = [], []
    for n, o in zip(shape, offset):
        o = int(o)
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    return tuple(src), tuple(dst)


class _DirectSeries:
    """Return probabilities b_t(0) by dense iterated convolution.

    The walk stays inside a box of side 2*r*T+1, which is allocated up front;
    both the entry count and the total element operations are guarded.
    """

    method = "direct"
    torus_size: int | None = None
    alias_bound = 0.0

    def __init__(
        self,
        b: WeightField,
        horizon: int,
        *,
        max_entries: int = _DIRECT_MAX_ENTRIES,
        max_ops: int = _DIRECT_MAX_OPS,
    ):
        d = b.dim
        r = b.support_radius()
        side = 2 * r * horizon + 1
        entries = side**d
        ops = entries * len(b) * horizon
        if entries > max_entries:
            raise BudgetError(
                f"direct series needs a box of {entries:.3g} entries "
                f"(side {side}, dim {d}); budget is {max_entries:.3g}"
            )
        if ops > max_ops:
            raise BudgetError(
                f"direct series needs {ops:.3g} element operations; "
                f"budget is {max_ops:.3g}"
            )
        self.horizon = horizon
        shape = (side,) * d
        center = (side // 2,) * d
        cur = np.zeros(shape)
        cur[center] = 1.0
        values = np.empty(horizon + 1)
        values[0] = 1.0
        for t in range(1, horizon + 1):
            nxt = np.zeros(shape)
            for off, w in zip(b.coords, b.weights):
                src, dst = _shift_views(shape, off)
                nxt[dst] += w * cur[src]
            cur = nxt
            values[t] = cur[center]
        self._values = values
        self._sums = np.cumsum(values) - 1.0  # s_t sums t >= 1

    def return_probability(self, t: int) -> float:
        return float(self._values[t])

    def partial_sum(self, t: int) -> float:
        return float(self._sums[t])


def _per_axis_stats(b: WeightField) -> tuple[float, int]:
    """Worst per-coordinate variance and max |step| of the difference walk."""
    w = b.weights
    var = max(float(np.sum(w * b.coords[:, i].astype(np.float64) ** 2))
              for i in range(b.dim))
    step = int(np.max(np.abs(b.coords))) if len(b) else 0
    return var, step


def _alias_bound(dim: int, horizon: int, var: float, step: int, side: int) -> float:
    # Wrapped images of the walk all have some coordinate at distance >= side/2;
    # Bernstein bound per coordinate and sign, worst at t = horizon.
    u = side / 2.0
    denom = 2.0 * (horizon * var + step * u / 3.0)
    return 2.0 * dim * math.exp(-(u * u) / denom) if denom > 0 else 0.0


class _SpectralSeries:
    """Return probabilities via characteristic-function powers on a torus.

    P(theta) = |phi_step(theta)|^2 is the characteristic function of the
    collision kernel, nonnegative by construction. Averaging P^t over an
    L-point grid per axis yields sum over x = 0 mod L of b_t(x): the true
    b_t(0) plus wrapped images, whose total mass is bounded by alias_bound.
    L is grown until that bound sits below rel_tol times a local-CLT floor
    for b_horizon(0).
    """

    method = "spectral"

    def __init__(
        self,
        kernel: MeanKernel,
        horizon: int,
        *,
        rel_tol: float = 1e-7,
        max_entries: int = _SPECTRAL_MAX_ENTRIES,
    ):
        a_bar = kernel.normalized
        d = a_bar.dim
        b = collision_kernel(kernel)
        var, step = _per_axis_stats(b)
        self.horizon = horizon
        if step == 0:
            # deterministic walk: difference pinned at the origin
            self.torus_size = 1
            self.alias_bound = 0.0
            self._probe = np.ones(1)
            self._unit = np.ones(1, dtype=bool)
            return
        floor = (2.0 * math.pi * var * horizon) ** (-d / 2.0)
        target = rel_tol * floor
        side = 8 * step
        while _alias_bound(d, horizon, var, step, side) > target:
            side = int(math.ceil(side * 1.2))
            if side**d > max_entries:
                raise BudgetError(
                    f"spectral series needs a torus of {side**d:.3g} points for "
                    f"alias tolerance {target:.3g}; budget is {max_entries:.3g}"
                )
        if side**d > max_entries:
            raise BudgetError(
                f"spectral series needs a torus of {side**d:.3g} points; "
                f"budget is {max_entries:.3g}"
            )
        self.torus_size = side
        self.alias_bound = _alias_bound(d, horizon, var, step, side)
        grid = np.zeros((side,) * d)
        idx = tuple(np.mod(a_bar.coords[:, i], side) for i in range(d))
        np.add.at(grid, idx, a_bar.weights)
        phi = np.fft.fftn(grid)
        probe = (phi.real**2 + phi.imag**2).ravel()
        del phi, grid
        np.minimum(probe, 1.0, out=probe)
        self._probe = probe
        self._unit = probe == 1.0

    def return_probability(self, t: int) -> float:
        return float(np.mean(self._probe**t))

    def partial_sum(self, t: int) -> float:
        p = self._probe
        pt = p**t
        with np.errstate(divide="ignore", invalid="ignore"):
            s = p * (1.0 - pt) / (1.0 - p)
        s[self._unit] = float(t)
        return float(s.mean())


def series_evaluator(
    kernel: MeanKernel,
    horizon: int,
    *,
    method: str = "auto",
    rel_tol: float = 1e-7,
    max_entries: int | None = None,
):
    """Build a series evaluator; auto prefers direct when it fits its budget."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    b = collision_kernel(kernel)
    if method == "direct":
        kw = {} if max_entries is None else {"max_entries": max_entries}
        return _DirectSeries(b, horizon, **kw)
    if method == "spectral":
        kw = {} if max_entries is None else {"max_entries": max_entries}
        return _SpectralSeries(kernel, horizon, rel_tol=rel_tol, **kw)
    if method != "auto":
        raise ValueError(f"unknown series method {method!r}")
    try:
        return _DirectSeries(b, horizon)
    except BudgetError:
        kw = {} if max_entries is None else {"max_entries": max_entries}
        return _SpectralSeries(kernel, horizon, rel_tol=rel_tol, **kw)


def _pi_from_sum(s: float) -> float:
    return s / (1.0 + s)


@dataclass
class PiEstimate:
    """Monte Carlo collision estimate over independent walker pairs."""

    n_walks: int
    horizon: int
    hits: int
    pi_hat: float
    ci_low: float
    ci_high: float
    collision_counts: np.ndarray  # collisions per pair within the horizon

    def count_survival(self, k_max: int = 5) -> tuple[np.ndarray, np.ndarray]:
        """Empirical P(V >= k) for k = 1..k_max."""
        ks = np.arange(1, k_max + 1)
        fracs = np.array([float(np.mean(self.collision_counts >= k)) for k in ks])
        return ks, fracs

    def to_dict(self) -> dict:
        return {
            "n_walks": self.n_walks,
            "horizon": self.horizon,
            "hits": self.hits,
            "pi_hat": self.pi_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "mean_collisions": float(np.mean(self.collision_counts)),
        }


@dataclass
class CollisionProfile:
    """Partial-sum profile of the difference-walk return series."""

    dim: int
    horizon: int
    method: str
    torus_size: int | None
    alias_bound: float
    checkpoints: np.ndarray      # increasing times
    partial_sums: np.ndarray     # s_t at the checkpoints
    head_times: np.ndarray       # small t
    head_values: np.ndarray      # b_t(0) at the head times
    total: float                 # s_horizon
    pi_series: float             # total / (1 + total), a lower bound for pi
    truncation_drift: float      # pi at horizon minus pi at horizon // 4
    pi_mc: PiEstimate | None = None

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "horizon": self.horizon,
            "method": self.method,
            "torus_size": self.torus_size,
            "alias_bound": self.alias_bound,
            "checkpoints": [int(t) for t in self.checkpoints],
            "partial_sums": [float(s) for s in self.partial_sums],
            "head_times": [int(t) for t in self.head_times],
            "head_values": [float(v) for v in self.head_values],
            "total": self.total,
            "pi_series": self.pi_series,
            "truncation_drift": self.truncation_drift,
            "pi_mc": None if self.pi_mc is None else self.pi_mc.to_dict(),
        }


def _default_checkpoints(horizon: int) -> np.ndarray:
    pts = np.unique(np.geomspace(1, horizon, num=33).astype(np.int64))
    return pts


def collision_series(
    kernel: MeanKernel,
    horizon: int | None = None,
    *,
    method: str = "auto",
    rel_tol: float = 1e-7,
    checkpoints: np.ndarray | None = None,
    max_entries: int | None = None,
) -> CollisionProfile:
    """Partial sums s_T of the return series and the pi lower bound.

    The truncation drift pi(T) - pi(T // 4) is recorded as the series' own
    scale of remaining movement; matched-horizon comparisons against Monte
    Carlo treat it as the truncation allowance.
    """
    dim = kernel.field.dim
    if horizon is None:
        horizon = default_horizon(dim)
    ev = series_evaluator(
        kernel, horizon, method=method, rel_tol=rel_tol, max_entries=max_entries
    )
    pts = _default_checkpoints(horizon) if checkpoints is None else np.asarray(
        np.unique(np.clip(checkpoints, 1, horizon)), dtype=np.int64
    )
    sums = np.array([ev.partial_sum(int(t)) for t in pts])
    total = float(sums[-1]) if len(pts) and int(pts[-1]) == horizon else ev.partial_sum(horizon)
    quarter = max(horizon // 4, 1)
    drift = _pi_from_sum(total) - _pi_from_sum(ev.partial_sum(quarter))
    if ev.method == "direct" or np.asarray(ev._probe).size <= 4_000_000:
        head_n = min(horizon, 32)
    else:
        head_n = min(horizon, 8)
    head_t = np.arange(1, head_n + 1, dtype=np.int64)
    head_v = np.array([ev.return_probability(int(t)) for t in head_t])
    return CollisionProfile(
        dim=dim,
        horizon=horizon,
        method=ev.method,
        torus_size=ev.torus_size,
        alias_bound=float(ev.alias_bound),
        checkpoints=pts,
        partial_sums=sums,
        head_times=head_t,
        head_values=head_v,
        total=float(total),
        pi_series=float(_pi_from_sum(total)),
        truncation_drift=float(max(drift, 0.0)),
    )


def pi_monte_carlo(
    kernel: MeanKernel,
    n_walks: int,
    horizon: int,
    seed: int,
    *,
    chunk: int = 1024,
) -> PiEstimate:
    """Fraction of walker pairs that collide by the horizon, with 95% CI.

    Pairs are independent across the walk index; draws come from the keyed
    stream, so the estimate is reproducible and independent of chunking.
    Collision counts within the horizon are kept per pair for checking the
    geometric law of the number of collisions.
    """
    if n_walks < 100:
        raise ValueError("need at least 100 walker pairs")
    a_bar = kernel.normalized
    d = a_bar.dim
    cum = np.cumsum(a_bar.weights)
    cum[-1] = 1.0  # guard the last bin against rounding
    atoms = a_bar.coords.astype(np.int64)
    ids = np.arange(n_walks, dtype=np.int64)[:, None]
    counts = np.zeros(n_walks, dtype=np.int64)
    diff = np.zeros((n_walks, d), dtype=np.int64)
    for start in range(1, horizon + 1, chunk):
        ts = np.arange(start, min(start + chunk, horizon + 1), dtype=np.int64)
        u_a = keyed_uniform(seed, ids, ts[None, :], 0, SLOT_PRIMARY)
        u_b = keyed_uniform(seed, ids, ts[None, :], 1, SLOT_PRIMARY)
        step_a = atoms[np.searchsorted(cum, u_a, side="right").clip(max=len(cum) - 1)]
        step_b = atoms[np.searchsorted(cum, u_b, side="right").clip(max=len(cum) - 1)]
        walk = np.cumsum(step_a - step_b, axis=1)
        walk += diff[:, None, :]
        counts += (walk == 0).all(axis=2).sum(axis=1)
        diff = walk[:, -1, :]
    hits = int(np.count_nonzero(counts))
    pi_hat = hits / n_walks
    lo, hi = wilson_interval(hits, n_walks)
    return PiEstimate(
        n_walks=n_walks,
        horizon=horizon,
        hits=hits,
        pi_hat=pi_hat,
        ci_low=lo,
        ci_high=hi,
        collision_counts=counts,
    )


@dataclass
class GeometricFit:
    """Chi-square comparison of collision counts against a geometric law."""

    pi_hat: float
    bin_edges: list[int]     # count bins, last one open-ended
    observed: np.ndarray
    expected: np.ndarray
    statistic: float
    pvalue: float

    def to_dict(self) -> dict:
        return {
            "pi_hat": self.pi_hat,
            "observed": [int(c) for c in self.observed],
            "expected": [float(e) for e in self.expected],
            "statistic": self.statistic,
            "pvalue": self.pvalue,
        }


def geometric_fit(counts: np.ndarray, pi_hat: float | None = None) -> GeometricFit:
    """Fit P(V = k) = (1 - pi) pi^k to per-pair collision counts.

    Bins are merged from the right until every expected count is >= 5; one
    degree of freedom is charged for the estimated parameter.
    """
    counts = np.asarray(counts)
    n = counts.size
    if n < 100:
        raise ValueError("need at least 100 samples")
    if pi_hat is None:
        pi_hat = float(np.mean(counts >= 1))
    if not 0.0 < pi_hat < 1.0:
        raise ValueError("geometric fit needs 0 < pi < 1")
    k_max = 1
    # open right tail: P(V >= k) = pi^k; grow bins while the tail stays heavy
    while n * pi_hat ** (k_max + 1) >= 5.0 and k_max < 30:
        k_max += 1
    edges = list(range(k_max + 1))
    observed = np.array([int(np.sum(counts == k)) for k in edges[:-1]]
                        + [int(np.sum(counts >= edges[-1]))])
    probs = [(1 - pi_hat) * pi_hat**k for k in edges[:-1]] + [pi_hat ** edges[-1]]
    expected = np.array(probs) * n
    statistic, pvalue = stats.chisquare(observed, expected, ddof=1)
    return GeometricFit(
        pi_hat=pi_hat,
        bin_edges=edges,
        observed=observed,
        expected=expected,
        statistic=float(statistic),
        pvalue=float(pvalue),
    )


@dataclass
class ThresholdSelection:
    """Outcome of the localization-horizon threshold search.

    status is one of:
      found             s_t crossed (1 + eps) / (gamma - 1) at t0;
      infeasible        no crossing is possible: gamma <= 1, or (for d >= 3)
                        gamma <= 1 / pi estimated from the converged series;
      horizon_exhausted the threshold exceeds s_horizon but the series is
                        still within reach of it (reported distinctly).
    """

    status: str
    t0: int | None
    epsilon: float | None
    threshold: float
    gamma: float
    partial_sum_at_horizon: float
    pi_series: float
    horizon: int
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "t0": self.t0,
            "epsilon": self.epsilon,
            "threshold": self.threshold,
            "gamma": self.gamma,
            "partial_sum_at_horizon": self.partial_sum_at_horizon,
            "pi_series": self.pi_series,
            "horizon": self.horizon,
            "note": self.note,
        }


_EPSILON_GRID_HIGH_DIM = (1.0, 0.5, 0.1, 0.01)


def _smallest_crossing(ev, threshold: float, horizon: int) -> int:
    lo, hi = 1, horizon
    while lo < hi:
        mid = (lo + hi) // 2
        if ev.partial_sum(mid) >= threshold:
            hi = mid
        else:
            lo = mid + 1
    return lo


def select_t0(
    kernel: MeanKernel,
    gamma: float,
    *,
    epsilon: float | None = None,
    horizon: int | None = None,
    evaluator=None,
    method: str = "auto",
    rel_tol: float = 1e-7,
    max_entries: int | None = None,
) -> ThresholdSelection:
    """Smallest t0 with s_t0 >= (1 + eps) / (gamma - 1), or why there is none.

    eps defaults to 1 in one and two dimensions. From three dimensions the
    series converges, so feasibility is checked first (gamma must exceed
    1 / pi with pi estimated from the series at the horizon) and then the
    largest eps in {1, 0.5, 0.1, 0.01} whose threshold the horizon reaches
    is taken.
    """
    dim = kernel.field.dim
    if horizon is None:
        horizon = default_horizon(dim)
    if gamma <= 1.0:
        return ThresholdSelection(
            status="infeasible",
            t0=None,
            epsilon=epsilon,
            threshold=math.inf,
            gamma=gamma,
            partial_sum_at_horizon=0.0,
            pi_series=0.0,
            horizon=horizon,
            note="second-moment growth factor is at most 1; threshold is infinite",
        )
    ev = evaluator
    if ev is None:
        ev = series_evaluator(
            kernel, horizon, method=method, rel_tol=rel_tol, max_entries=max_entries
        )
    s_horizon = ev.partial_sum(horizon)
    pi_hat = _pi_from_sum(s_horizon)
    if dim >= 3 and gamma <= 1.0 / pi_hat:
        return ThresholdSelection(
            status="infeasible",
            t0=None,
            epsilon=epsilon,
            threshold=(1.0 + (epsilon if epsilon is not None else 0.01)) / (gamma - 1.0),
            gamma=gamma,
            partial_sum_at_horizon=s_horizon,
            pi_series=pi_hat,
            horizon=horizon,
            note=(
                "gamma does not exceed the reciprocal collision probability "
                f"(1/pi = {1.0 / pi_hat:.6g} from the converged series)"
            ),
        )
    if epsilon is not None:
        grid: tuple[float, ...] = (epsilon,)
    elif dim <= 2:
        grid = (1.0,)
    else:
        grid = _EPSILON_GRID_HIGH_DIM
    for eps in grid:
        threshold = (1.0 + eps) / (gamma - 1.0)
        if s_horizon >= threshold:
            t0 = _smallest_crossing(ev, threshold, horizon)
            return ThresholdSelection(
                status="found",
                t0=t0,
                epsilon=eps,
                threshold=threshold,
                gamma=gamma,
                partial_sum_at_horizon=s_horizon,
                pi_series=pi_hat,
                horizon=horizon,
            )
    threshold = (1.0 + grid[-1]) / (gamma - 1.0)
    return ThresholdSelection(
        status="horizon_exhausted",
        t0=None,
        epsilon=grid[-1],
        threshold=threshold,
        gamma=gamma,
        partial_sum_at_horizon=s_horizon,
        pi_series=pi_hat,
        horizon=horizon,
        note=(
            f"s_horizon = {s_horizon:.6g} below the smallest threshold "
            f"{threshold:.6g}; a longer horizon may still cross it"
        ),
    )


def finite_collision_sum(kernel: MeanKernel, t0: int) -> WeightField:
    """g = sum_{1 <= s <= t0} b_s, the finite window of difference-walk laws.

    This is the smoothing kernel of the localization functional; its total
    mass is t0 and its value at the origin is s_t0.
    """
    if t0 < 1:
        raise ValueError("t0 must be >= 1")
    b = collision_kernel(kernel)
    acc = b
    cur = b
    for _ in range(t0 - 1):
        cur = convolve(cur, b)
        coords = np.concatenate([acc.coords, cur.coords])
        weights = np.concatenate([acc.weights, cur.weights])
        acc = WeightField.from_pairs(coords, weights, b.dim)
    return acc


@dataclass
class ReturnDominance:
    """Finite-horizon view of the peak-mass to return-probability ratio.

    ratio_t = max_x (t-step walk law at x) / b_t(0), maximized over a window
    around the start. Boundedness of this ratio over all t is the dominance
    condition used to certify localization in high dimension without the
    gamma-pi hypothesis; only finite-horizon evidence is reported.
    """

    horizon: int
    radius: int | None
    ratios: np.ndarray          # per t = 1..horizon
    max_ratio: float
    argmax_time: int

    def window_max(self, t_lo: int, t_hi: int) -> float:
        return float(np.max(self.ratios[t_lo - 1 : t_hi]))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "radius": self.radius,
            "max_ratio": self.max_ratio,
            "argmax_time": self.argmax_time,
        }


def peak_return_ratio(
    kernel: MeanKernel,
    horizon: int,
    *,
    radius: int | None = None,
    max_entries: int = _DIRECT_MAX_ENTRIES * 4,
    rel_tol: float = 1e-7,
) -> ReturnDominance:
    """max_x walk_t(x) / b_t(0) for t up to the horizon.

    The numerator is the dense t-fold convolution of the normalized kernel,
    evolved in a growing box; the denominator comes from a series evaluator
    at the same horizon. Budget-guarded like the direct series.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a_bar = kernel.normalized
    d = a_bar.dim
    r = kernel.range_
    side = 2 * r * horizon + 1
    if side**d > max_entries:
        raise BudgetError(
            f"walk-law box needs {side**d:.3g} entries; budget is {max_entries:.3g}"
        )
    ev = series_evaluator(kernel, horizon, rel_tol=rel_tol)
    ratios = np.empty(horizon)
    cur = np.ones((1,) * d)
    for t in range(1, horizon + 1):
        shape = tuple(n + 2 * r for n in cur.shape)
        nxt = np.zeros(shape)
        for off, w in zip(a_bar.coords, a_bar.weights):
            dst = tuple(
                slice(r + int(o), r + int(o) + n) for o, n in zip(off, cur.shape)
            )
            nxt[dst] += w * cur
        cur = nxt
        if radius is None:
            peak = float(cur.max())
        else:
            c = r * t
            lo, hi = max(c - radius, 0), min(c + radius + 1, cur.shape[0])
            window = cur[(slice(lo, hi),) * d]
            peak = float(window.max()) if window.size else 0.0
        ratios[t - 1] = peak / ev.return_probability(t)
    arg = int(np.argmax(ratios)) + 1
    return ReturnDominance(
        horizon=horizon,
        radius=radius,
        ratios=ratios,
        max_ratio=float(ratios[arg - 1]),
        argmax_time=arg,
    )
