"""Sparse nonnegative fields on the integer lattice Z^d.

A field assigns a nonnegative weight to finitely many lattice sites. Sites are
stored as packed integer keys (all coordinates offset-shifted into a fixed bit
budget per dimension) together with aligned coordinate and weight arrays, kept
sorted by key. Sorted storage makes every reduction order-normalized: summing
a field always adds weights in key order, so repeated runs and different
construction orders emit identical bytes.

Weights are exact: entries equal to 0.0 are pruned, nothing else is. There is
no epsilon thresholding anywhere in this module; a site is in the support if
and only if its weight is a strictly positive float.

The normalized state of an evolution is a probability field plus the log of
the running total mass relative to the deterministic growth factor. Total mass
of the raw population is never materialized; it grows geometrically and would
overflow long before interesting horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SitePoint = tuple[int, ...]


class BudgetError(RuntimeError):
    """A computation would exceed its declared memory or operation budget."""


# Bits reserved per coordinate when packing a site into a single int64 key.
# 63 usable bits, capped at 32 per axis; supports |coord| < 2**(bits-1).
_MAX_BITS = 32


def coord_bits(dim: int) -> int:
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    return min(63 // dim, _MAX_BITS)


def coord_limit(dim: int) -> int:
    """Largest representable |coordinate| for fields of this dimension."""
    return (1 << (coord_bits(dim) - 1)) - 1


def pack_sites(coords: np.ndarray, dim: int) -> np.ndarray:
    """Pack an (n, dim) int array of sites into (n,) int64 keys.

    Keys order sites lexicographically by offset coordinates, which is the
    canonical iteration order of every field.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != dim:
        raise ValueError(f"expected (n, {dim}) coordinate array, got {coords.shape}")
    bits = coord_bits(dim)
    offset = np.int64(1) << (bits - 1)
    if coords.size and (coords.min() < -offset + 1 or coords.max() > offset - 1):
        raise ValueError(
            f"coordinate out of packable range +-{offset - 1} for dim {dim}"
        )
    keys = np.zeros(coords.shape[0], dtype=np.int64)
    for axis in range(dim):
        keys = (keys << bits) | (coords[:, axis] + offset)
    return keys


def unpack_sites(keys: np.ndarray, dim: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    bits = coord_bits(dim)
    offset = np.int64(1) << (bits - 1)
    mask = (np.int64(1) << bits) - np.int64(1)
    out = np.empty((keys.shape[0], dim), dtype=np.int64)
    for axis in range(dim - 1, -1, -1):
        out[:, axis] = (keys & mask) - offset
        keys = keys >> bits
    return out


def _aggregate(coords: np.ndarray, weights: np.ndarray, dim: int):
    """Sum duplicate sites and return key-sorted (keys, coords, weights)."""
    keys = pack_sites(coords, dim)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    weights = np.asarray(weights, dtype=np.float64)[order]
    uniq, starts = np.unique(keys, return_index=True)
    summed = np.add.reduceat(weights, starts) if len(uniq) else weights[:0]
    return uniq, unpack_sites(uniq, dim), summed


@dataclass(eq=False)
class WeightField:
    """Finitely supported map from Z^d sites to nonnegative weights."""

    dim: int
    keys: np.ndarray      # (n,) int64, strictly increasing
    coords: np.ndarray    # (n, dim) int64 aligned with keys
    weights: np.ndarray   # (n,) float64, strictly positive

    @classmethod
    def from_pairs(cls, coords, weights, dim: int) -> "WeightField":
        """Build a field from possibly duplicated site/weight pairs.

        Duplicates are summed. Negative weights are rejected; exact zeros are
        pruned after aggregation.
        """
        weights = np.asarray(weights, dtype=np.float64)
        if weights.size and weights.min() < 0.0:
            raise ValueError("weights must be nonnegative")
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, dim)
        keys, coords, summed = _aggregate(coords, weights, dim)
        keep = summed != 0.0
        return cls(dim, keys[keep], coords[keep], summed[keep])

    @classmethod
    def from_dict(cls, items: dict[SitePoint, float], dim: int) -> "WeightField":
        if not items:
            return cls.empty(dim)
        coords = np.array(sorted(items.keys()), dtype=np.int64)
        weights = np.array([items[tuple(c)] for c in coords], dtype=np.float64)
        return cls.from_pairs(coords, weights, dim)

    @classmethod
    def point(cls, site: SitePoint, dim: int, weight: float = 1.0) -> "WeightField":
        return cls.from_pairs(np.array([site], dtype=np.int64), [weight], dim)

    @classmethod
    def empty(cls, dim: int) -> "WeightField":
        return cls(
            dim,
            np.empty(0, dtype=np.int64),
            np.empty((0, dim), dtype=np.int64),
            np.empty(0, dtype=np.float64),
        )

    def __len__(self) -> int:
        return int(self.keys.shape[0])

    def total(self) -> float:
        # stored key order, so the addition order is canonical
        return float(np.sum(self.weights))

    def get(self, site: SitePoint) -> float:
        key = pack_sites(np.array([site], dtype=np.int64), self.dim)[0]
        idx = np.searchsorted(self.keys, key)
        if idx < len(self.keys) and self.keys[idx] == key:
            return float(self.weights[idx])
        return 0.0

    def items(self):
        for c, w in zip(self.coords, self.weights):
            yield tuple(int(v) for v in c), float(w)

    def as_dict(self) -> dict[SitePoint, float]:
        return dict(self.items())

    def support_radius(self) -> int:
        """Max absolute coordinate over the support (0 for empty fields)."""
        if not len(self):
            return 0
        return int(np.abs(self.coords).max())

    def scaled(self, factor: float) -> "WeightField":
        if factor < 0.0:
            raise ValueError("scale factor must be nonnegative")
        if factor == 0.0:
            return WeightField.empty(self.dim)
        return WeightField(self.dim, self.keys, self.coords, self.weights * factor)

    def weight_at_keys(self, keys: np.ndarray) -> np.ndarray:
        """Vectorized lookup: weights at the given packed keys (0 if absent)."""
        idx = np.searchsorted(self.keys, keys)
        idx_c = np.minimum(idx, max(len(self.keys) - 1, 0))
        out = np.zeros(keys.shape[0], dtype=np.float64)
        if len(self.keys):
            hit = self.keys[idx_c] == keys
            out[hit] = self.weights[idx_c[hit]]
        return out


def total_mass(f: WeightField) -> float:
    """Sum of all weights, added in canonical key order."""
    return f.total()


@dataclass(eq=False)
class NormalizedState:
    """Probability field plus accumulated log relative mass at a given time.

    ``log_mass`` is ln of the total mass divided by the t-th power of the mean
    total-offspring factor; it is -inf once the population dies out. Extinction
    is absorbing: the support is empty and stays empty.
    """

    rho: WeightField
    log_mass: float
    time: int
    extinct: bool = field(default=False)

    def support_size(self) -> int:
        return len(self.rho)


def normalize(f: WeightField, prior_log_mass: float, time: int) -> NormalizedState:
    """Turn a raw weight field into a probability field, folding the total
    into the running log mass. An all-zero (empty) field is extinction."""
    s = f.total()
    if s == 0.0:
        return NormalizedState(WeightField.empty(f.dim), -math.inf, time, True)
    rho = WeightField(f.dim, f.keys, f.coords, f.weights / s)
    return NormalizedState(rho, prior_log_mass + math.log(s), time, False)


def initial_state(dim: int, site: SitePoint | None = None) -> NormalizedState:
    """Point-mass starting state (origin by default) at time 0."""
    if site is None:
        site = (0,) * dim
    return NormalizedState(WeightField.point(site, dim), 0.0, 0, False)


def convolve(f: WeightField, g: WeightField) -> WeightField:
    """Exact sparse convolution: (f*g)(z) = sum_x f(x) g(z-x)."""
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    if not len(f) or not len(g):
        return WeightField.empty(f.dim)
    # Outer sum of supports; duplicates are aggregated in key order.
    coords = (f.coords[:, None, :] + g.coords[None, :, :]).reshape(-1, f.dim)
    weights = (f.weights[:, None] * g.weights[None, :]).reshape(-1)
    return WeightField.from_pairs(coords, weights, f.dim)


def inner_product(f: WeightField, g: WeightField) -> float:
    """sum_x f(x) g(x), iterating in key order over the smaller field."""
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    if len(f) > len(g):
        f, g = g, f
    return float(np.sum(f.weights * g.weight_at_keys(f.keys)))
