"""Keyed counter-style randomness for lattice disorder.

Every variate the simulator consumes is a pure function of the tuple
(seed, replica, time, site key, slot). Nothing is ever drawn from a stateful
generator: two calls with the same key tuple return the same value no matter
the call order, the batch shape, or which worker issues them. That is what
makes ensembles byte-identical across worker counts and lets the exact
enumerator regenerate the very disorder realization a simulated trajectory
consumed, one matrix entry at a time.

The key tuple is folded through a chain of splitmix64 finalizer rounds (one
round per field, each field pre-multiplied by its own odd constant), and the
final 64-bit state is mapped to a uniform in the open interval (0, 1) via the
top 53 bits. Gaussians use the inverse normal CDF on that uniform, so the
whole pipeline stays deterministic and order-free.

Two implementations are kept in lockstep and tested bit-identical: a
vectorized numpy/uint64 path used by the simulator, and a scalar pure-Python
path used by the enumerating oracle.

Slot layout (fixed; the oracle relies on it):
  0 -> primary site variable (occupation, environment, or noise factor)
  1 -> diagonal/holdover site variable
  2 -> direction choice for single-offspring models
  3 + k -> per-bond variable for the k-th unit vector, unit vectors ordered
           lexicographically as tuples, e.g. d=2: (-1,0) < (0,-1) < (0,1) < (1,0)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

SLOT_PRIMARY = 0
SLOT_DIAGONAL = 1
SLOT_DIRECTION = 2
SLOT_BOND_BASE = 3

_MASK = (1 << 64) - 1
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15
_C_REPLICA = 0xD1342543DE82EF95
_C_TIME = 0xAF251AF3B0F025B5
_C_SITE = 0xB564EF22EC7AECE5
_C_SLOT = 0xF7C2EBC08F67F2B5


def _mix_np(h: np.ndarray) -> np.ndarray:
    h = h ^ (h >> np.uint64(30))
    h = h * np.uint64(_M1)
    h = h ^ (h >> np.uint64(27))
    h = h * np.uint64(_M2)
    h = h ^ (h >> np.uint64(31))
    return h


def keyed_state(seed, replica, t, site_key, slot) -> np.ndarray:
    """Vectorized 64-bit state for key tuples; all fields broadcast."""
    with np.errstate(over="ignore"):
        h = _mix_np(np.uint64(seed & _MASK) + np.uint64(_GOLDEN))
        h = _mix_np(
            h ^ ((np.asarray(replica, dtype=np.uint64) + np.uint64(1)) * np.uint64(_C_REPLICA))
        )
        h = _mix_np(
            h ^ ((np.asarray(t, dtype=np.uint64) + np.uint64(1)) * np.uint64(_C_TIME))
        )
        h = _mix_np(
            h ^ ((np.asarray(site_key, dtype=np.uint64) + np.uint64(1)) * np.uint64(_C_SITE))
        )
        h = _mix_np(
            h ^ ((np.asarray(slot, dtype=np.uint64) + np.uint64(1)) * np.uint64(_C_SLOT))
        )
    return h


def keyed_uniform(seed, replica, t, site_key, slot) -> np.ndarray:
    """Uniforms in the open interval (0, 1), one per broadcast key tuple."""
    h = keyed_state(seed, replica, t, site_key, slot)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _mix_py(h: int) -> int:
    h ^= h >> 30
    h = (h * _M1) & _MASK
    h ^= h >> 27
    h = (h * _M2) & _MASK
    h ^= h >> 31
    return h


def keyed_uniform_scalar(seed: int, replica: int, t: int, site_key: int, slot: int) -> float:
    """Pure-Python twin of keyed_uniform; bit-identical by construction."""
    h = _mix_py((seed & _MASK) + _GOLDEN & _MASK)
    h = _mix_py(h ^ (((replica + 1) * _C_REPLICA) & _MASK))
    h = _mix_py(h ^ (((t + 1) * _C_TIME) & _MASK))
    h = _mix_py(h ^ (((site_key + 1) * _C_SITE) & _MASK))
    h = _mix_py(h ^ (((slot + 1) * _C_SLOT) & _MASK))
    return ((h >> 11) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class DisorderStream:
    """Disorder source for one replica of one experiment.

    Methods are pure lookups into the keyed stream; they may be called in any
    order, repeatedly, from any worker, and always return the same values.
    """

    seed: int
    replica: int

    def uniforms(self, t: int, site_keys, slot) -> np.ndarray:
        return keyed_uniform(self.seed, self.replica, t, site_keys, slot)

    def bernoulli(self, t: int, site_keys, slot, p: float) -> np.ndarray:
        """0/1 indicators as float64 (they multiply weight arrays)."""
        return (self.uniforms(t, site_keys, slot) < p).astype(np.float64)

    def gaussians(self, t: int, site_keys, slot) -> np.ndarray:
        return ndtri(self.uniforms(t, site_keys, slot))

    def choices(self, t: int, site_keys, slot, k: int) -> np.ndarray:
        """Integers uniform on {0, ..., k-1}."""
        u = self.uniforms(t, site_keys, slot)
        return np.minimum((u * k).astype(np.int64), k - 1)

    # scalar twins (oracle path) ------------------------------------------

    def uniform_scalar(self, t: int, site_key: int, slot: int) -> float:
        return keyed_uniform_scalar(self.seed, self.replica, t, site_key, slot)

    def bernoulli_scalar(self, t: int, site_key: int, slot: int, p: float) -> float:
        return 1.0 if self.uniform_scalar(t, site_key, slot) < p else 0.0

    def gaussian_scalar(self, t: int, site_key: int, slot: int) -> float:
        return float(ndtri(self.uniform_scalar(t, site_key, slot)))

    def choice_scalar(self, t: int, site_key: int, slot: int, k: int) -> int:
        return min(int(self.uniform_scalar(t, site_key, slot) * k), k - 1)
