"""Trajectory observables: overlap, peak density, smoothed companions.

The central quantity is the replica overlap sum_x rho(x)^2: the probability
that two independent copies of the population, sampled by mass, sit on the
same site. Localization shows up as the overlap staying bounded away from
zero along the trajectory; decay of the relative mass is tracked against the
running overlap sum, which is the natural clock for it.

Records store one value per time step from 0 to the horizon. After
extinction the population field is empty, so overlap, peak and support are
exactly 0 from the extinction time on, the log relative mass is -inf, and
the running sums freeze.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import WeightField, convolve, inner_product
from .models import MeanKernel


def replica_overlap(rho: WeightField) -> float:
    """sum_x rho(x)^2 (0 for the empty field)."""
    return float(np.sum(rho.weights * rho.weights))


def max_density(rho: WeightField) -> float:
    return float(rho.weights.max()) if len(rho) else 0.0


def smoothed_density(rho: WeightField, kernel: MeanKernel) -> WeightField:
    """rho convolved with the normalized mean kernel."""
    return convolve(rho, kernel.normalized)


def smoothed_overlap(rho: WeightField, kernel: MeanKernel) -> float:
    """Overlap of the smoothed density; a lower companion to the raw one.

    Sandwiched as smoothed <= raw <= smoothing_gap * smoothed, with
    smoothing_gap = |a|^2 / |a^2| of the kernel.
    """
    sm = smoothed_density(rho, kernel)
    return float(np.sum(sm.weights * sm.weights))


def localization_functional(rho: WeightField, g: WeightField) -> float:
    """<g * rho, rho>: mass-weighted pair correlation within range of g.

    Bounded by total_mass(g) times the overlap for any nonnegative g.
    """
    return inner_product(convolve(g, rho), rho)


@dataclass(eq=False)
class TrajectoryRecord:
    """Per-step observables of one simulated trajectory.

    Arrays are indexed by time 0..t_max. ``step_factors[t-1]`` holds the
    one-step total-mass factor U_t = exp(log_mass[t] - log_mass[t-1]) for
    t = 1..t_max; it is 0.0 at the extinction step and NaN afterwards
    (no step happened).
    """

    replica: int
    t_max: int
    survived: bool
    extinction_time: int | None
    overlap: np.ndarray          # R_t
    peak: np.ndarray             # max density
    smoothed: np.ndarray         # smoothed overlap
    log_mass: np.ndarray         # -inf once extinct
    support: np.ndarray          # support sizes, int64
    overlap_sum: np.ndarray      # running sum of R_s, s<=t
    overlap_32_sum: np.ndarray   # running sum of R_s^(3/2)
    step_factors: np.ndarray     # U_t, length t_max
    slope: float | None = None   # per-trajectory decay slope (filled later)
    slope_ok: bool = False

    def final_log_mass(self) -> float:
        return float(self.log_mass[-1])

    def window_max_overlap(self, window_fraction: float = 0.5) -> float:
        start = int(math.ceil(self.t_max * window_fraction))
        return float(self.overlap[start:].max()) if start <= self.t_max else 0.0

    def heavy_tail_ratio(self) -> float:
        """Final sum of R^{3/2} over final sum of R (0 if the overlap sum
        is 0, which only happens for an instantly extinct trajectory)."""
        denom = float(self.overlap_sum[-1])
        return float(self.overlap_32_sum[-1]) / denom if denom > 0.0 else 0.0


class InsufficientDataError(ValueError):
    """Raised when an ensemble statistic has too few usable trajectories."""


@dataclass
class DecayRegression:
    """Ensemble summary of per-trajectory mass-decay slopes.

    For each survivor, the least-squares slope of -log_mass[t] against the
    running overlap sum up to t-1, over the trailing half of the horizon.
    A positive slope means the mass decays at a rate proportional to the
    accumulated overlap.
    """

    slopes: np.ndarray
    median_slope: float
    fraction_positive: float
    n_used: int
    applicable: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "median_slope": self.median_slope if self.applicable else None,
            "fraction_positive": self.fraction_positive if self.applicable else None,
            "n_used": self.n_used,
            "applicable": self.applicable,
            "note": self.note,
        }


def trajectory_decay_slope(rec: TrajectoryRecord) -> tuple[float, bool]:
    """Slope of -log_mass vs running overlap sum on the trailing half.

    Returns (slope, ok); ok is False when the predictor is degenerate
    (numerically constant over the window), in which case no slope is
    meaningful for this trajectory.
    """
    start = rec.t_max // 2
    ts = np.arange(start, rec.t_max + 1)
    x = np.where(ts > 0, rec.overlap_sum[np.maximum(ts - 1, 0)], 0.0)
    y = -rec.log_mass[ts]
    if not np.all(np.isfinite(y)):
        return 0.0, False
    vx = float(np.var(x))
    if vx <= 1e-18 * max(1.0, float(np.mean(x)) ** 2):
        return 0.0, False
    slope = float(np.cov(x, y, bias=True)[0, 1] / vx)
    return slope, True


def decay_regression(
    records: list[TrajectoryRecord],
    *,
    min_survivors: int = 10,
    min_horizon: int = 50,
) -> DecayRegression:
    survivors = [r for r in records if r.survived and r.t_max >= min_horizon]
    if len(survivors) < min_survivors:
        raise InsufficientDataError(
            f"need >= {min_survivors} survivors with horizon >= {min_horizon}, "
            f"have {len(survivors)}"
        )
    slopes = []
    for r in survivors:
        slope, ok = trajectory_decay_slope(r)
        if ok:
            slopes.append(slope)
    if not slopes:
        return DecayRegression(
            np.empty(0), math.nan, math.nan, 0, False,
            "predictor degenerate on every survivor (overlap sum numerically constant)",
        )
    arr = np.array(slopes, dtype=np.float64)
    return DecayRegression(
        arr,
        float(np.median(arr)),
        float(np.mean(arr > 0.0)),
        len(arr),
        True,
    )


DEFAULT_THRESHOLDS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


@dataclass
class LocalizationSummary:
    """Trailing-window overlap exceedances over an ensemble."""

    thresholds: tuple[float, ...]
    window_fraction: float
    n_records: int
    n_survivors: int
    window_max: np.ndarray            # per record
    heavy_tail_ratio: np.ndarray      # per record
    survivor_exceedance: np.ndarray   # fraction of survivors per threshold
    overall_exceedance: np.ndarray    # fraction of all records per threshold
    survived_mask: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "window_fraction": self.window_fraction,
            "n_records": self.n_records,
            "n_survivors": self.n_survivors,
            "survivor_exceedance": [float(v) for v in self.survivor_exceedance],
            "overall_exceedance": [float(v) for v in self.overall_exceedance],
            "median_window_max_survivors": (
                float(np.median(self.window_max[self.survived_mask]))
                if self.n_survivors else None
            ),
            "median_heavy_tail_ratio": (
                float(np.median(self.heavy_tail_ratio[self.survived_mask]))
                if self.n_survivors else None
            ),
        }


def localization_summary(
    records: list[TrajectoryRecord],
    *,
    window_fraction: float = 0.5,
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> LocalizationSummary:
    n = len(records)
    wmax = np.array([r.window_max_overlap(window_fraction) for r in records])
    ratio = np.array([r.heavy_tail_ratio() for r in records])
    survived = np.array([r.survived for r in records], dtype=bool)
    ns = int(survived.sum())
    surv_exc = np.array([
        float(np.mean(wmax[survived] >= c)) if ns else 0.0 for c in thresholds
    ])
    all_exc = np.array([float(np.mean(wmax >= c)) if n else 0.0 for c in thresholds])
    out = LocalizationSummary(
        tuple(thresholds), window_fraction, n, ns, wmax, ratio, surv_exc, all_exc
    )
    out.survived_mask = survived
    return out


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% (by default) Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)
