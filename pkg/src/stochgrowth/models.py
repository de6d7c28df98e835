"""Lattice growth models driven by i.i.d. random nonnegative kernels.

A model describes one time step of a linear evolution: the population row
vector is multiplied by a random banded matrix whose columns are independent,
translation invariant in distribution, and supported within unit range of the
diagonal. Concretely, the weight landing on site y at time t is

    w(y) = sum_x rho(x) * A[t, x, y] / |a|,

where rho is the current normalized population, A[t] the random matrix and
|a| the total mass of the mean column. Every variate inside A[t] comes from
the keyed disorder stream, addressed by (time, site key, slot), so a step is
a pure function of (model, state, stream).

Built-in families:

* ``OrientedSitePercolation`` / ``GeneralOrientedSitePercolation``: each site
  carries one occupation bit shared by all incoming neighbor entries, plus an
  optional independent holdover bit on the diagonal.
* ``OrientedBondPercolation``: an independent bit per incoming bond, plus the
  optional holdover bit.
* ``DirectedPolymer``: each site carries an environment variable eta and all
  incoming neighbor entries equal exp(beta*eta)/(2d).
* ``BinaryContactPath``: each site picks one parent direction uniformly;
  the corresponding entry carries an occupation bit, and the diagonal an
  independent holdover bit.
* ``MultiplicativeNoise``: an arbitrary finite-range nonnegative mean kernel
  modulated by i.i.d. mean-one noise per site.

For each family the module provides, in closed form: the mean kernel, the
column second-moment table E[A[x,y] A[x~,y]], the smallest constant gamma
with E[A[x,y] A[x~,y]] <= gamma * a(y-x) a(y-x~) compatible with the
column-covariance positivity condition, and the log-moment growth margin
whose sign separates slow (sub-mean) growth from full growth. Monte Carlo
companions for the tables live here too, so every closed form has an
empirical cross-check sharing no code with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .disorder import (
    SLOT_BOND_BASE,
    SLOT_DIAGONAL,
    SLOT_DIRECTION,
    SLOT_PRIMARY,
    DisorderStream,
    keyed_uniform,
)
from .lattice import (
    NormalizedState,
    SitePoint,
    WeightField,
    normalize,
    pack_sites,
    unpack_sites,
)


def unit_vectors(dim: int) -> np.ndarray:
    """The 2d signed unit vectors, ordered lexicographically as tuples.

    The order is a fixed contract: bond slots and direction choices index
    into it, and the enumerating oracle reconstructs entries through it.
    """
    vecs = []
    for axis in range(dim):
        for sign in (-1, 1):
            v = [0] * dim
            v[axis] = sign
            vecs.append(tuple(v))
    vecs.sort()
    return np.array(vecs, dtype=np.int64)


def _unit_index(dim: int) -> dict[SitePoint, int]:
    return {tuple(int(c) for c in v): i for i, v in enumerate(unit_vectors(dim))}


@dataclass(eq=False)
class MeanKernel:
    """Mean column a(y) = E[A[t, 0, y]] of a model, with derived norms."""

    field: WeightField          # a
    total: float                # |a| = sum_y a(y)
    sq_total: float             # |a^2| = sum_y a(y)^2
    range_: int                 # max |offset| over the support (max-norm)
    irreducible: bool           # support of sum_y a(x+y)a(y) spans R^d

    @property
    def normalized(self) -> WeightField:
        return self.field.scaled(1.0 / self.total)

    @property
    def smoothing_gap(self) -> float:
        """|a|^2 / |a^2|: the factor bounding the raw/smoothed overlap ratio."""
        return self.total * self.total / self.sq_total


def kernel_from_weights(weights: dict[SitePoint, float], dim: int) -> MeanKernel:
    """Mean kernel from an explicit offset -> weight table.

    No irreducibility requirement here; reducible kernels are legal inputs
    for the walk-level machinery even though models reject them.
    """
    return _kernel_from_dict(weights, dim)


def _kernel_from_dict(weights: dict[SitePoint, float], dim: int) -> MeanKernel:
    f = WeightField.from_dict(weights, dim)
    if not len(f):
        raise ValueError("mean kernel must have nonempty support")
    total = f.total()
    sq_total = float(np.sum(f.weights * f.weights))
    range_ = f.support_radius()
    # irreducibility: offsets x with sum_y a(x+y)a(y) != 0 must span R^d;
    # that support is the difference set of the kernel support.
    diffs = (f.coords[:, None, :] - f.coords[None, :, :]).reshape(-1, dim)
    rank = int(np.linalg.matrix_rank(diffs)) if diffs.size else 0
    return MeanKernel(f, total, sq_total, range_, rank == dim)


def _lookup(sorted_keys: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Values at query keys against a key-sorted table, 0 where absent."""
    out = np.zeros(query.shape[0], dtype=np.float64)
    if len(sorted_keys):
        idx = np.minimum(np.searchsorted(sorted_keys, query), len(sorted_keys) - 1)
        hit = sorted_keys[idx] == query
        out[hit] = values[idx[hit]]
    return out


def _aggregate_targets(coords: np.ndarray, vals: np.ndarray, dim: int):
    """Sum contributions per target site; returns key-sorted arrays."""
    keys = pack_sites(coords, dim)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    vals = vals[order]
    uniq, starts = np.unique(keys, return_index=True)
    sums = np.add.reduceat(vals, starts) if len(uniq) else vals[:0]
    return uniq, sums


# --------------------------------------------------------------------------
# environment laws for the polymer family
# --------------------------------------------------------------------------


class EnvironmentLaw:
    """Law of the site environment eta for the directed polymer."""

    def log_mgf(self, beta: float) -> float:
        raise NotImplementedError

    def log_mgf_prime(self, beta: float) -> float:
        raise NotImplementedError

    def draw(self, stream: DisorderStream, t: int, site_keys, slot) -> np.ndarray:
        raise NotImplementedError

    def draw_scalar(self, stream: DisorderStream, t: int, site_key: int, slot: int) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianEnvironment(EnvironmentLaw):
    def log_mgf(self, beta: float) -> float:
        return 0.5 * beta * beta

    def log_mgf_prime(self, beta: float) -> float:
        return beta

    def draw(self, stream, t, site_keys, slot):
        return stream.gaussians(t, site_keys, slot)

    def draw_scalar(self, stream, t, site_key, slot):
        return stream.gaussian_scalar(t, site_key, slot)

    label = "gaussian"


@dataclass(frozen=True)
class BernoulliEnvironment(EnvironmentLaw):
    """eta = 1 with probability rate, else 0."""

    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must lie in [0, 1], got {self.rate}")

    def log_mgf(self, beta: float) -> float:
        # ln(1 - rate + rate*e^beta), stable for large beta
        if self.rate == 0.0:
            return 0.0
        if self.rate == 1.0:
            return beta
        return float(np.logaddexp(math.log1p(-self.rate), math.log(self.rate) + beta))

    def log_mgf_prime(self, beta: float) -> float:
        if self.rate in (0.0, 1.0):
            return self.rate
        return math.exp(math.log(self.rate) + beta - self.log_mgf(beta))

    def draw(self, stream, t, site_keys, slot):
        return stream.bernoulli(t, site_keys, slot, self.rate)

    def draw_scalar(self, stream, t, site_key, slot):
        return stream.bernoulli_scalar(t, site_key, slot, self.rate)

    @property
    def label(self) -> str:
        return f"bernoulli({self.rate})"


@dataclass(frozen=True)
class TabulatedEnvironment(EnvironmentLaw):
    """Finite discrete environment law given by atoms and probabilities."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if len(self.values) != len(p) or len(p) == 0:
            raise ValueError("values and probs must be equal-length and nonempty")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")

    def _cum(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.probs, dtype=np.float64))

    def log_mgf(self, beta: float) -> float:
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        shift = beta * v.max()
        return float(shift + np.log(np.sum(p * np.exp(beta * v - shift))))

    def log_mgf_prime(self, beta: float) -> float:
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        w = p * np.exp(beta * v - beta * v.max())
        return float(np.sum(w * v) / np.sum(w))

    def draw(self, stream, t, site_keys, slot):
        u = stream.uniforms(t, site_keys, slot)
        idx = np.searchsorted(self._cum(), u, side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return np.asarray(self.values, dtype=np.float64)[idx]

    def draw_scalar(self, stream, t, site_key, slot):
        import bisect

        u = stream.uniform_scalar(t, site_key, slot)
        idx = min(bisect.bisect_right(self._cum(), u), len(self.values) - 1)
        return float(self.values[idx])

    @property
    def label(self) -> str:
        return f"table({len(self.values)} atoms)"


# --------------------------------------------------------------------------
# mean-one noise laws for the multiplicative family
# --------------------------------------------------------------------------


class NoiseLaw:
    """Law of the i.i.d. mean-one site noise of the multiplicative model."""

    def second_moment(self) -> float:
        raise NotImplementedError

    def mean_x_log_x(self) -> float:
        """E[X ln X] with the 0 ln 0 = 0 convention."""
        raise NotImplementedError

    def draw(self, stream, t, site_keys, slot) -> np.ndarray:
        raise NotImplementedError

    def draw_scalar(self, stream, t, site_key, slot) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class TabulatedNoise(NoiseLaw):
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if len(v) != len(p) or len(v) == 0:
            raise ValueError("values and probs must be equal-length and nonempty")
        if v.min() < 0:
            raise ValueError("noise values must be nonnegative")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        if abs(float(np.sum(v * p)) - 1.0) > 1e-12:
            raise ValueError("noise law must have mean one")

    def second_moment(self) -> float:
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        return float(np.sum(p * v * v))

    def mean_x_log_x(self) -> float:
        total = 0.0
        for v, p in zip(self.values, self.probs):
            if v > 0.0:
                total += p * v * math.log(v)
        return total

    def _cum(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.probs, dtype=np.float64))

    def draw(self, stream, t, site_keys, slot):
        u = stream.uniforms(t, site_keys, slot)
        idx = np.minimum(np.searchsorted(self._cum(), u, side="right"), len(self.values) - 1)
        return np.asarray(self.values, dtype=np.float64)[idx]

    def draw_scalar(self, stream, t, site_key, slot):
        import bisect

        u = stream.uniform_scalar(t, site_key, slot)
        idx = min(bisect.bisect_right(self._cum(), u), len(self.values) - 1)
        return float(self.values[idx])

    label = "table"


@dataclass(frozen=True)
class LognormalNoise(NoiseLaw):
    """exp(sigma*Z - sigma^2/2) for standard normal Z; mean one by design."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def second_moment(self) -> float:
        return math.exp(self.sigma * self.sigma)

    def mean_x_log_x(self) -> float:
        return 0.5 * self.sigma * self.sigma

    def draw(self, stream, t, site_keys, slot):
        z = stream.gaussians(t, site_keys, slot)
        return np.exp(self.sigma * z - 0.5 * self.sigma * self.sigma)

    def draw_scalar(self, stream, t, site_key, slot):
        z = stream.gaussian_scalar(t, site_key, slot)
        return math.exp(self.sigma * z - 0.5 * self.sigma * self.sigma)

    @property
    def label(self) -> str:
        return f"lognormal({self.sigma})"


# --------------------------------------------------------------------------
# model families
# --------------------------------------------------------------------------


@dataclass(eq=False)
class LatticeModel:
    """Base class: one family of random kernels on Z^dim."""

    dim: int

    kind = "abstract"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")

    # -- contracts implemented per family ---------------------------------

    def mean_kernel(self) -> MeanKernel:
        raise NotImplementedError

    def gamma(self) -> float:
        """Smallest workable constant in the column-covariance domination."""
        raise NotImplementedError

    def column_second_moment(self, x: SitePoint, xt: SitePoint, y: SitePoint) -> float:
        """Closed-form E[A[x,y] * A[xt,y]]."""
        raise NotImplementedError

    def growth_log_margin(self) -> float:
        """sum_y E[A[0,y] ln A[0,y]] - |a| ln |a|; positive means the
        population log-mass drifts strictly below the mean growth rate."""
        raise NotImplementedError

    def step(self, state: NormalizedState, stream: DisorderStream) -> NormalizedState:
        raise NotImplementedError

    def matrix_entry(self, stream: DisorderStream, t: int, x: SitePoint, y: SitePoint) -> float:
        """Scalar A[t, x, y] rebuilt from the keyed stream (oracle path)."""
        raise NotImplementedError

    def entry_batch(self, seed: int, replicas: np.ndarray, t: int,
                    x: SitePoint, y: SitePoint) -> np.ndarray:
        """A[t, x, y] across independent replicas (Monte Carlo path)."""
        raise NotImplementedError

    def conditional_step_variance(self, rho: WeightField) -> float:
        """Exact Var(sum_y w(y) | rho) from the covariance tables."""
        raise NotImplementedError

    def degeneracies(self) -> list[str]:
        """Violated non-triviality assumptions (empty when fully regular)."""
        return []

    def params(self) -> dict:
        raise NotImplementedError

    # -- shared helpers -----------------------------------------------------

    @cached_property
    def _units(self) -> np.ndarray:
        return unit_vectors(self.dim)

    @cached_property
    def _unit_idx(self) -> dict[SitePoint, int]:
        return _unit_index(self.dim)

    def _require_alive(self, state: NormalizedState):
        if state.extinct:
            raise ValueError("cannot step an extinct state (extinction is absorbing)")

    def _neighbor_sums(self, rho: WeightField):
        """Aggregate sum_x rho(x) over x adjacent to each target site."""
        n = len(rho)
        k = self._units.shape[0]
        coords = (rho.coords[:, None, :] + self._units[None, :, :]).reshape(-1, self.dim)
        vals = np.repeat(rho.weights, k)
        return _aggregate_targets(coords, vals, self.dim)

    def _finish(self, state: NormalizedState, keys: np.ndarray, w: np.ndarray) -> NormalizedState:
        keep = w != 0.0
        keys = keys[keep]
        f = WeightField(self.dim, keys, unpack_sites(keys, self.dim), w[keep])
        return normalize(f, state.log_mass, state.time + 1)

    def label(self) -> str:
        p = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{self.kind}(dim={self.dim}, {p})"


def _percolation_margin(total: float) -> float:
    """Log-moment margin when every matrix entry is 0 or 1."""
    if total <= 0.0:
        return 0.0
    return -total * math.log(total)


@dataclass(eq=False)
class GeneralOrientedSitePercolation(LatticeModel):
    """Site occupation bit on each target plus independent holdover bit.

    A[t,x,y] = 1{|x-y|=1} eta[t,y] + 1{x=y} zeta[t,y] with eta ~ Bern(p),
    zeta ~ Bern(q), drawn once per site y and shared by all entries of
    column y.
    """

    p: float
    q: float = 0.0

    kind = "gosp"

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("p and q must lie in [0, 1]")

    def params(self) -> dict:
        return {"p": self.p, "q": self.q}

    @cached_property
    def _kernel(self) -> MeanKernel:
        weights: dict[SitePoint, float] = {}
        if self.p > 0.0:
            for v in self._units:
                weights[tuple(int(c) for c in v)] = self.p
        if self.q > 0.0:
            weights[(0,) * self.dim] = self.q
        return _kernel_from_dict(weights, self.dim)

    def mean_kernel(self) -> MeanKernel:
        return self._kernel

    def gamma(self) -> float:
        a = 2 * self.dim * self.p + self.q
        if a == 0.0:
            raise ValueError("gamma undefined for the zero kernel (p=q=0)")
        num = 2 * self.dim * self.p * (1.0 - self.p) + self.q * (1.0 - self.q)
        return 1.0 + num / (a * a)

    def growth_log_margin(self) -> float:
        return _percolation_margin(self._kernel.total)

    def degeneracies(self) -> list[str]:
        out = []
        if not (0.0 < self.p < 1.0 or 0.0 < self.q < 1.0):
            out.append("neither p nor q lies in (0, 1): the kernel is deterministic")
        if not self._kernel.irreducible:
            out.append("mean kernel support does not span the lattice")
        return out

    def column_second_moment(self, x, xt, y) -> float:
        dx = tuple(int(b - a) for a, b in zip(x, y))
        dxt = tuple(int(b - a) for a, b in zip(xt, y))
        x_diag, xt_diag = x == y, xt == y
        x_nbr, xt_nbr = dx in self._unit_idx, dxt in self._unit_idx
        if x_diag and xt_diag:
            return self.q
        if x_nbr and xt_nbr:
            return self.p
        ax = self.p if x_nbr else (self.q if x_diag else 0.0)
        axt = self.p if xt_nbr else (self.q if xt_diag else 0.0)
        return ax * axt

    def step(self, state, stream):
        self._require_alive(state)
        t = state.time + 1
        rho = state.rho
        nkeys, nsum = self._neighbor_sums(rho)
        if self.q > 0.0:
            keys = np.union1d(nkeys, rho.keys)
        else:
            keys = nkeys
        nbr = _lookup(nkeys, nsum, keys)
        w = np.zeros(len(keys), dtype=np.float64)
        if self.p > 0.0:
            w += stream.bernoulli(t, keys, SLOT_PRIMARY, self.p) * nbr
        if self.q > 0.0:
            w += stream.bernoulli(t, keys, SLOT_DIAGONAL, self.q) * rho.weight_at_keys(keys)
        w /= self._kernel.total
        return self._finish(state, keys, w)

    def matrix_entry(self, stream, t, x, y) -> float:
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        d = tuple(int(b - a) for a, b in zip(x, y))
        if x == y:
            return stream.bernoulli_scalar(t, key, SLOT_DIAGONAL, self.q)
        if d in self._unit_idx:
            return stream.bernoulli_scalar(t, key, SLOT_PRIMARY, self.p)
        return 0.0

    def entry_batch(self, seed, replicas, t, x, y) -> np.ndarray:
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        d = tuple(int(b - a) for a, b in zip(x, y))
        if x == y:
            u = keyed_uniform(seed, replicas, t, key, SLOT_DIAGONAL)
            return (u < self.q).astype(np.float64)
        if d in self._unit_idx:
            u = keyed_uniform(seed, replicas, t, key, SLOT_PRIMARY)
            return (u < self.p).astype(np.float64)
        return np.zeros(len(replicas), dtype=np.float64)

    def conditional_step_variance(self, rho: WeightField) -> float:
        nkeys, nsum = self._neighbor_sums(rho)
        keys = np.union1d(nkeys, rho.keys)
        nbr = _lookup(nkeys, nsum, keys)
        diag = rho.weight_at_keys(keys)
        var = (
            self.p * (1.0 - self.p) * nbr * nbr
            + self.q * (1.0 - self.q) * diag * diag
        )
        return float(np.sum(var)) / self._kernel.total**2


@dataclass(eq=False)
class OrientedSitePercolation(GeneralOrientedSitePercolation):
    """Site percolation without holdover; carries the sharper gamma = 1/p."""

    kind = "osp"

    def __post_init__(self):
        super().__post_init__()
        if self.q != 0.0:
            raise ValueError("plain site percolation has no holdover; use gosp")

    def params(self) -> dict:
        return {"p": self.p}

    def gamma(self) -> float:
        if self.p <= 0.0:
            raise ValueError("gamma undefined at p = 0")
        return 1.0 / self.p


@dataclass(eq=False)
class OrientedBondPercolation(LatticeModel):
    """Independent occupation bit per incoming bond plus holdover bit.

    A[t,x,y] = 1{|x-y|=1} eta[t,x,y] + 1{x=y} zeta[t,y]; the bond bits are
    independent across bonds, which makes columns less correlated than the
    site version (mean kernel and growth margin coincide).
    """

    p: float
    q: float = 0.0

    kind = "gobp"

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("p and q must lie in [0, 1]")

    def params(self) -> dict:
        return {"p": self.p, "q": self.q}

    @cached_property
    def _kernel(self) -> MeanKernel:
        weights: dict[SitePoint, float] = {}
        if self.p > 0.0:
            for v in self._units:
                weights[tuple(int(c) for c in v)] = self.p
        if self.q > 0.0:
            weights[(0,) * self.dim] = self.q
        return _kernel_from_dict(weights, self.dim)

    def mean_kernel(self) -> MeanKernel:
        return self._kernel

    def gamma(self) -> float:
        a = 2 * self.dim * self.p + self.q
        if a == 0.0:
            raise ValueError("gamma undefined for the zero kernel (p=q=0)")
        num = 2 * self.dim * self.p * (1.0 - self.p) + self.q * (1.0 - self.q)
        return 1.0 + num / (a * a)

    def growth_log_margin(self) -> float:
        return _percolation_margin(self._kernel.total)

    def degeneracies(self) -> list[str]:
        out = []
        if not (0.0 < self.p < 1.0 or 0.0 < self.q < 1.0):
            out.append("neither p nor q lies in (0, 1): the kernel is deterministic")
        if not self._kernel.irreducible:
            out.append("mean kernel support does not span the lattice")
        return out

    def _mean_entry(self, d: SitePoint) -> float:
        if d in self._unit_idx:
            return self.p
        if all(c == 0 for c in d):
            return self.q
        return 0.0

    def column_second_moment(self, x, xt, y) -> float:
        dx = tuple(int(b - a) for a, b in zip(x, y))
        dxt = tuple(int(b - a) for a, b in zip(xt, y))
        if x == xt:
            return self._mean_entry(dx)
        return self._mean_entry(dx) * self._mean_entry(dxt)

    def step(self, state, stream):
        self._require_alive(state)
        t = state.time + 1
        rho = state.rho
        k = self._units.shape[0]
        coords = (rho.coords[:, None, :] + self._units[None, :, :]).reshape(-1, self.dim)
        flat_keys = pack_sites(coords, self.dim)
        dir_idx = np.tile(np.arange(k, dtype=np.int64), len(rho))
        contrib = np.repeat(rho.weights, k)
        if self.p > 0.0:
            contrib = contrib * stream.bernoulli(t, flat_keys, SLOT_BOND_BASE + dir_idx, self.p)
        else:
            contrib = np.zeros_like(contrib)
        nkeys, nsum = _aggregate_targets(coords, contrib, self.dim)
        if self.q > 0.0:
            keys = np.union1d(nkeys, rho.keys)
        else:
            keys = nkeys
        w = _lookup(nkeys, nsum, keys)
        if self.q > 0.0:
            w = w + stream.bernoulli(t, keys, SLOT_DIAGONAL, self.q) * rho.weight_at_keys(keys)
        w /= self._kernel.total
        return self._finish(state, keys, w)

    def matrix_entry(self, stream, t, x, y) -> float:
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        d = tuple(int(b - a) for a, b in zip(x, y))
        if x == y:
            return stream.bernoulli_scalar(t, key, SLOT_DIAGONAL, self.q)
        if d in self._unit_idx:
            return stream.bernoulli_scalar(t, key, SLOT_BOND_BASE + self._unit_idx[d], self.p)
        return 0.0

    def entry_batch(self, seed, replicas, t, x, y) -> np.ndarray:
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        d = tuple(int(b - a) for a, b in zip(x, y))
        if x == y:
            return (keyed_uniform(seed, replicas, t, key, SLOT_DIAGONAL) < self.q).astype(np.float64)
        if d in self._unit_idx:
            slot = SLOT_BOND_BASE + self._unit_idx[d]
            return (keyed_uniform(seed, replicas, t, key, slot) < self.p).astype(np.float64)
        return np.zeros(len(replicas), dtype=np.float64)

    def conditional_step_variance(self, rho: WeightField) -> float:
        k = self._units.shape[0]
        coords = (rho.coords[:, None, :] + self._units[None, :, :]).reshape(-1, self.dim)
        sq = np.repeat(rho.weights * rho.weights, k)
        _, sq_sums = _aggregate_targets(coords, sq, self.dim)
        var = self.p * (1.0 - self.p) * float(np.sum(sq_sums))
        var += self.q * (1.0 - self.q) * float(np.sum(rho.weights * rho.weights))
        return var / self._kernel.total**2


@dataclass(eq=False)
class DirectedPolymer(LatticeModel):
    """Nearest-neighbor averaging kernel in an exponentiated environment.

    A[t,x,y] = 1{|x-y|=1} exp(beta * eta[t,y]) / (2 dim); all entries of
    column y share the environment variable eta[t,y].
    """

    beta: float
    env: EnvironmentLaw = dc_field(default_factory=GaussianEnvironment)

    kind = "dpre"

    def __post_init__(self):
        super().__post_init__()
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")

    def params(self) -> dict:
        return {"beta": self.beta, "env": self.env.label}

    @cached_property
    def _lam(self) -> float:
        return self.env.log_mgf(self.beta)

    @cached_property
    def _kernel(self) -> MeanKernel:
        val = math.exp(self._lam) / (2 * self.dim)
        weights = {tuple(int(c) for c in v): val for v in self._units}
        return _kernel_from_dict(weights, self.dim)

    def mean_kernel(self) -> MeanKernel:
        return self._kernel

    def gamma(self) -> float:
        return math.exp(self.env.log_mgf(2 * self.beta) - 2.0 * self._lam)

    def growth_log_margin(self) -> float:
        lam = self._lam
        lam_p = self.env.log_mgf_prime(self.beta)
        return math.exp(lam) * (self.beta * lam_p - lam - math.log(2 * self.dim))

    def degeneracies(self) -> list[str]:
        return ["beta = 0: the kernel is deterministic"] if self.beta == 0.0 else []

    def column_second_moment(self, x, xt, y) -> float:
        dx = tuple(int(b - a) for a, b in zip(x, y))
        dxt = tuple(int(b - a) for a, b in zip(xt, y))
        if dx not in self._unit_idx or dxt not in self._unit_idx:
            return 0.0
        a = self._kernel.field.get(dx)
        return self.gamma() * a * a

    def step(self, state, stream):
        self._require_alive(state)
        t = state.time + 1
        rho = state.rho
        keys, nsum = self._neighbor_sums(rho)
        eta = self.env.draw(stream, t, keys, SLOT_PRIMARY)
        w = nsum * np.exp(self.beta * eta - self._lam) / (2 * self.dim)
        return self._finish(state, keys, w)

    def matrix_entry(self, stream, t, x, y) -> float:
        d = tuple(int(b - a) for a, b in zip(x, y))
        if d not in self._unit_idx:
            return 0.0
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        eta = self.env.draw_scalar(stream, t, key, SLOT_PRIMARY)
        return math.exp(self.beta * eta) / (2 * self.dim)

    def entry_batch(self, seed, replicas, t, x, y) -> np.ndarray:
        d = tuple(int(b - a) for a, b in zip(x, y))
        if d not in self._unit_idx:
            return np.zeros(len(replicas), dtype=np.float64)
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        u = keyed_uniform(seed, replicas, t, key, SLOT_PRIMARY)
        if isinstance(self.env, GaussianEnvironment):
            from scipy.special import ndtri

            eta = ndtri(u)
        elif isinstance(self.env, BernoulliEnvironment):
            eta = (u < self.env.rate).astype(np.float64)
        else:
            cum = np.cumsum(np.asarray(self.env.probs, dtype=np.float64))
            idx = np.minimum(np.searchsorted(cum, u, side="right"), len(self.env.values) - 1)
            eta = np.asarray(self.env.values, dtype=np.float64)[idx]
        return np.exp(self.beta * eta) / (2 * self.dim)

    def conditional_step_variance(self, rho: WeightField) -> float:
        keys, nsum = self._neighbor_sums(rho)
        m1 = nsum / (2 * self.dim)
        return (self.gamma() - 1.0) * float(np.sum(m1 * m1))


@dataclass(eq=False)
class BinaryContactPath(LatticeModel):
    """Each site receives from one uniformly chosen neighbor plus holdover.

    A[t,x,y] = eta[t,y] 1{dir[t,y] = y - x} + 1{x=y} zeta[t,y] where dir is
    uniform over the 2*dim unit vectors; eta ~ Bern(p), zeta ~ Bern(q).
    Distinct neighbor entries of one column are mutually exclusive, so the
    column covariance has negative off-diagonal terms.
    """

    p: float
    q: float = 0.0

    kind = "bcpp"

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("p and q must lie in [0, 1]")

    def params(self) -> dict:
        return {"p": self.p, "q": self.q}

    @cached_property
    def _kernel(self) -> MeanKernel:
        weights: dict[SitePoint, float] = {}
        if self.p > 0.0:
            for v in self._units:
                weights[tuple(int(c) for c in v)] = self.p / (2 * self.dim)
        if self.q > 0.0:
            weights[(0,) * self.dim] = self.q
        return _kernel_from_dict(weights, self.dim)

    def mean_kernel(self) -> MeanKernel:
        return self._kernel

    def gamma(self) -> float:
        s = self.p + self.q
        if s == 0.0:
            raise ValueError("gamma undefined for the zero kernel (p=q=0)")
        num = self.p * (1.0 - self.p) + self.q * (1.0 - self.q)
        return 1.0 + num / (s * s)

    def growth_log_margin(self) -> float:
        return _percolation_margin(self._kernel.total)

    def degeneracies(self) -> list[str]:
        out = []
        if not (0.0 < self.p < 1.0 or 0.0 < self.q < 1.0):
            out.append("neither p nor q lies in (0, 1): the kernel is deterministic")
        if not self._kernel.irreducible:
            out.append("mean kernel support does not span the lattice")
        return out

    def _mean_entry(self, d: SitePoint) -> float:
        if d in self._unit_idx:
            return self.p / (2 * self.dim)
        if all(c == 0 for c in d):
            return self.q
        return 0.0

    def column_second_moment(self, x, xt, y) -> float:
        dx = tuple(int(b - a) for a, b in zip(x, y))
        dxt = tuple(int(b - a) for a, b in zip(xt, y))
        if x == xt:
            return self._mean_entry(dx)
        out = 0.0
        if x == y:
            out += self.q * self._mean_entry(dxt)
        if xt == y:
            out += self.q * self._mean_entry(dx)
        return out

    def step(self, state, stream):
        self._require_alive(state)
        t = state.time + 1
        rho = state.rho
        k = self._units.shape[0]
        coords = (rho.coords[:, None, :] + self._units[None, :, :]).reshape(-1, self.dim)
        flat_keys = pack_sites(coords, self.dim)
        dir_idx = np.tile(np.arange(k, dtype=np.int64), len(rho))
        contrib = np.zeros(len(flat_keys), dtype=np.float64)
        if self.p > 0.0:
            chosen = stream.choices(t, flat_keys, SLOT_DIRECTION, k) == dir_idx
            eta = stream.bernoulli(t, flat_keys, SLOT_PRIMARY, self.p)
            contrib = np.repeat(rho.weights, k) * eta * chosen
        nkeys, nsum = _aggregate_targets(coords, contrib, self.dim)
        if self.q > 0.0:
            keys = np.union1d(nkeys, rho.keys)
        else:
            keys = nkeys
        w = _lookup(nkeys, nsum, keys)
        if self.q > 0.0:
            w = w + stream.bernoulli(t, keys, SLOT_DIAGONAL, self.q) * rho.weight_at_keys(keys)
        w /= self._kernel.total
        return self._finish(state, keys, w)

    def matrix_entry(self, stream, t, x, y) -> float:
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        d = tuple(int(b - a) for a, b in zip(x, y))
        if x == y:
            return stream.bernoulli_scalar(t, key, SLOT_DIAGONAL, self.q)
        if d in self._unit_idx:
            chosen = stream.choice_scalar(t, key, SLOT_DIRECTION, 2 * self.dim)
            if chosen != self._unit_idx[d]:
                return 0.0
            return stream.bernoulli_scalar(t, key, SLOT_PRIMARY, self.p)
        return 0.0

    def entry_batch(self, seed, replicas, t, x, y) -> np.ndarray:
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        d = tuple(int(b - a) for a, b in zip(x, y))
        if x == y:
            return (keyed_uniform(seed, replicas, t, key, SLOT_DIAGONAL) < self.q).astype(np.float64)
        if d in self._unit_idx:
            k = 2 * self.dim
            u_dir = keyed_uniform(seed, replicas, t, key, SLOT_DIRECTION)
            chosen = np.minimum((u_dir * k).astype(np.int64), k - 1) == self._unit_idx[d]
            eta = keyed_uniform(seed, replicas, t, key, SLOT_PRIMARY) < self.p
            return (chosen & eta).astype(np.float64)
        return np.zeros(len(replicas), dtype=np.float64)

    def conditional_step_variance(self, rho: WeightField) -> float:
        k = self._units.shape[0]
        coords = (rho.coords[:, None, :] + self._units[None, :, :]).reshape(-1, self.dim)
        rep = np.repeat(rho.weights, k)
        nkeys, s1 = _aggregate_targets(coords, rep, self.dim)       # sum of rho over nbrs
        _, s2 = _aggregate_targets(coords, rep * rep, self.dim)     # sum of rho^2 over nbrs
        keys = np.union1d(nkeys, rho.keys)
        nbr1 = _lookup(nkeys, s1, keys) / k
        nbr2 = _lookup(nkeys, s2, keys) / k
        diag = rho.weight_at_keys(keys)
        mean = self.p * nbr1 + self.q * diag
        second = self.p * nbr2 + self.q * diag * diag + 2.0 * self.p * self.q * nbr1 * diag
        return float(np.sum(second - mean * mean)) / self._kernel.total**2


@dataclass(eq=False)
class MultiplicativeNoise(LatticeModel):
    """User mean kernel modulated by i.i.d. mean-one noise per column.

    A[t,x,y] = noise[t,y] * a(y-x). The column covariance factorizes with
    equality, so gamma is exactly the noise second moment.
    """

    kernel_weights: dict
    noise: NoiseLaw

    kind = "mult"

    def __post_init__(self):
        super().__post_init__()
        kern = self.mean_kernel()
        if not kern.irreducible:
            raise ValueError(
                "user mean kernel must be irreducible "
                "(difference set of the support has to span the lattice)"
            )

    def params(self) -> dict:
        return {
            "kernel": {",".join(map(str, k)): v for k, v in sorted(self.kernel_weights.items())},
            "noise": self.noise.label,
        }

    @cached_property
    def _kernel(self) -> MeanKernel:
        return _kernel_from_dict(
            {tuple(int(c) for c in k): float(v) for k, v in self.kernel_weights.items()},
            self.dim,
        )

    def mean_kernel(self) -> MeanKernel:
        return self._kernel

    def gamma(self) -> float:
        return self.noise.second_moment()

    def growth_log_margin(self) -> float:
        kern = self._kernel
        a_log_a = float(np.sum(kern.field.weights * np.log(kern.field.weights)))
        total = kern.total
        return total * self.noise.mean_x_log_x() + a_log_a - total * math.log(total)

    def degeneracies(self) -> list[str]:
        return [] if self.noise.second_moment() > 1.0 else [
            "noise has zero variance: the kernel is deterministic"
        ]

    def column_second_moment(self, x, xt, y) -> float:
        dx = tuple(int(b - a) for a, b in zip(x, y))
        dxt = tuple(int(b - a) for a, b in zip(xt, y))
        return self.noise.second_moment() * self._kernel.field.get(dx) * self._kernel.field.get(dxt)

    def step(self, state, stream):
        self._require_alive(state)
        t = state.time + 1
        rho = state.rho
        kern = self._kernel
        k = len(kern.field)
        coords = (rho.coords[:, None, :] + kern.field.coords[None, :, :]).reshape(-1, self.dim)
        vals = (rho.weights[:, None] * kern.normalized.weights[None, :]).reshape(-1)
        keys, conv = _aggregate_targets(coords, vals, self.dim)
        w = conv * self.noise.draw(stream, t, keys, SLOT_PRIMARY)
        return self._finish(state, keys, w)

    def matrix_entry(self, stream, t, x, y) -> float:
        d = tuple(int(b - a) for a, b in zip(x, y))
        a = self._kernel.field.get(d)
        if a == 0.0:
            return 0.0
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        return a * self.noise.draw_scalar(stream, t, key, SLOT_PRIMARY)

    def entry_batch(self, seed, replicas, t, x, y) -> np.ndarray:
        d = tuple(int(b - a) for a, b in zip(x, y))
        a = self._kernel.field.get(d)
        if a == 0.0:
            return np.zeros(len(replicas), dtype=np.float64)
        key = int(pack_sites(np.array([y], dtype=np.int64), self.dim)[0])
        u = keyed_uniform(seed, replicas, t, key, SLOT_PRIMARY)
        if isinstance(self.noise, LognormalNoise):
            from scipy.special import ndtri

            s = self.noise.sigma
            return a * np.exp(s * ndtri(u) - 0.5 * s * s)
        cum = np.cumsum(np.asarray(self.noise.probs, dtype=np.float64))
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(self.noise.values) - 1)
        return a * np.asarray(self.noise.values, dtype=np.float64)[idx]

    def conditional_step_variance(self, rho: WeightField) -> float:
        kern = self._kernel
        coords = (rho.coords[:, None, :] + kern.field.coords[None, :, :]).reshape(-1, self.dim)
        vals = (rho.weights[:, None] * kern.normalized.weights[None, :]).reshape(-1)
        _, m1 = _aggregate_targets(coords, vals, self.dim)
        return (self.gamma() - 1.0) * float(np.sum(m1 * m1))


# --------------------------------------------------------------------------
# module-level operations
# --------------------------------------------------------------------------


def sample_step(model: LatticeModel, state: NormalizedState, stream: DisorderStream) -> NormalizedState:
    """Advance one time step; see the model classes for the kernel forms."""
    return model.step(state, stream)


def log_mgf(beta: float, env: EnvironmentLaw) -> float:
    """Log moment generating function of the polymer environment at beta."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    return env.log_mgf(beta)


def empirical_column_covariance(
    model: LatticeModel,
    x: SitePoint,
    xt: SitePoint,
    y: SitePoint,
    n: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of A[x,y]*A[xt,y] over n draws.

    Shares the keyed-stream addressing with the simulator (so within-column
    dependence is reproduced exactly) but none of the closed-form code.
    """
    replicas = np.arange(n, dtype=np.int64)
    prod = model.entry_batch(seed, replicas, 1, x, y) * model.entry_batch(seed, replicas, 1, xt, y)
    mean = float(np.mean(prod))
    se = float(np.std(prod, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def onestep_mass_factors(model: LatticeModel, n: int, seed: int = 0) -> np.ndarray:
    """n independent one-step total-mass factors from a point mass.

    Equals exp(delta log_mass) of a real step from the origin (0 at
    extinction); realization-by-realization identical to driving step()
    with the same seed/replica, because both read the same keyed variates.
    """
    origin = (0,) * model.dim
    kern = model.mean_kernel()
    replicas = np.arange(n, dtype=np.int64)
    total = np.zeros(n, dtype=np.float64)
    for c in kern.field.coords:
        y = tuple(int(v) for v in c)
        total += model.entry_batch(seed, replicas, 1, origin, y)
    return total / kern.total


def frozen_step_factors(
    model: LatticeModel, rho: WeightField, n: int, seed: int = 0, t: int = 1
) -> np.ndarray:
    """n independent one-step mass factors conditioned on the density rho.

    U = (1/|a|) sum_y sum_x rho(x) A[t, x, y], with fresh disorder per
    replica and the frozen rho held fixed. Entries that share a column y
    share that column's draws, so cross-source correlations within a column
    are preserved exactly.
    """
    kern = model.mean_kernel()
    replicas = np.arange(n, dtype=np.int64)
    total = np.zeros(n, dtype=np.float64)
    for site, mass in rho.items():
        for c in kern.field.coords:
            y = tuple(int(a + b) for a, b in zip(site, c))
            total += mass * model.entry_batch(seed, replicas, t, site, y)
    return total / kern.total


def covariance_quadratic_form(model: LatticeModel, xi: WeightField, gamma: float | None = None) -> float:
    """sum_{x,xt,y} (E[A[x,y]A[xt,y]] - gamma a(y-x) a(y-xt)) xi(x) xi(xt).

    Nonnegative for every nonnegative xi when gamma is admissible for the
    column-covariance domination; used to validate the per-family gamma.
    """
    if gamma is None:
        gamma = model.gamma()
    kern = model.mean_kernel()
    offsets = [tuple(int(v) for v in c) for c in kern.field.coords]
    sites = [s for s, _ in xi.items()]
    xi_map = xi.as_dict()
    columns = {tuple(int(a + b) for a, b in zip(s, o)) for s in sites for o in offsets}
    total = 0.0
    for y in sorted(columns):
        sources = []
        for o in offsets:
            x = tuple(int(b - a) for a, b in zip(o, y))
            if x in xi_map:
                sources.append(x)
        mean_part = 0.0
        for x in sources:
            ax = kern.field.get(tuple(int(b - a) for a, b in zip(x, y)))
            mean_part += ax * xi_map[x]
        second = 0.0
        for x in sources:
            for xt in sources:
                second += model.column_second_moment(x, xt, y) * xi_map[x] * xi_map[xt]
        total += second - gamma * mean_part * mean_part
    return total


BUILTIN_KINDS = ("osp", "gosp", "gobp", "dpre", "bcpp", "mult")


def build_model(
    kind: str,
    dim: int,
    *,
    p: float | None = None,
    q: float = 0.0,
    beta: float | None = None,
    env: str = "gaussian",
    env_rate: float = 0.5,
    noise_sigma: float = 0.5,
    kernel: dict | None = None,
) -> LatticeModel:
    """Construct a model from plain config values (CLI/config-file entry)."""
    kind = kind.lower()
    if kind == "osp":
        if p is None:
            raise ValueError("osp requires p")
        return OrientedSitePercolation(dim, p)
    if kind == "gosp":
        if p is None:
            raise ValueError("gosp requires p")
        return GeneralOrientedSitePercolation(dim, p, q)
    if kind == "gobp":
        if p is None:
            raise ValueError("gobp requires p")
        return OrientedBondPercolation(dim, p, q)
    if kind == "dpre":
        if beta is None:
            raise ValueError("dpre requires beta")
        env = env.lower()
        if env == "gaussian":
            law: EnvironmentLaw = GaussianEnvironment()
        elif env == "bernoulli":
            law = BernoulliEnvironment(env_rate)
        else:
            raise ValueError(f"unknown environment law {env!r}")
        return DirectedPolymer(dim, beta, law)
    if kind == "bcpp":
        if p is None:
            raise ValueError("bcpp requires p")
        return BinaryContactPath(dim, p, q)
    if kind == "mult":
        if kernel is None:
            kernel = {}
            for v in unit_vectors(dim):
                kernel[tuple(int(c) for c in v)] = 1.0 / (2 * dim)
        return MultiplicativeNoise(dim, kernel, LognormalNoise(noise_sigma))
    raise ValueError(f"unknown model kind {kind!r}; expected one of {BUILTIN_KINDS}")
