"""Label substrate for Rough Mount Fuji landscapes: deterministic uniforms,
l^q distances and the increasing-path predicate.

A site's label is X_v = U_v + theta * d(0, v) where U_v is a Uniform(0,1)
variable attached to the site.  All randomness is derived from a stateless
counter-based hash keyed by (seed, site id), so any worker can evaluate any
site's uniform independently and replay is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Metric",
    "Site",
    "LabelField",
    "RmfParams",
    "lp_distance",
    "rmf_label",
    "is_increasing",
    "uniform_at",
]

Site = tuple  # tuple of ints, one entry per lattice dimension

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    """splitmix64 finalizer; full avalanche on 64-bit words."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _combine(key: int, value: int) -> int:
    """Fold one integer into a hash key."""
    return _mix(key ^ ((value & _MASK) * _GOLDEN & _MASK) ^ _GOLDEN)


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _combine_np(key: np.ndarray, value: np.ndarray) -> np.ndarray:
    v = value.astype(np.uint64) * np.uint64(_GOLDEN)
    return _mix_np(key ^ v ^ np.uint64(_GOLDEN))


def _u01(key: int) -> float:
    # 53 high bits, offset by half a step: values lie strictly inside (0,1)
    return ((key >> 11) + 0.5) * 2.0**-53


def _u01_np(key: np.ndarray) -> np.ndarray:
    return ((key >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class Metric:
    """l^q norm parameter; q = math.inf selects the max norm.

    Integer q keeps an exact-integer path for ||v||_q^q so that
    "moves further from the origin" can be decided without rounding.
    Non-integer q falls back to floating-point powers with relative error
    below 1e-12 on integer sites; comparison ties break as not-further.
    """

    q: float

    def __post_init__(self):
        if not (self.q >= 1.0):
            raise ValueError(f"metric exponent must satisfy q >= 1, got {self.q}")

    @property
    def is_integer(self) -> bool:
        return self.q != math.inf and float(self.q).is_integer()

    def power_key(self, site: Sequence[int]):
        """Exact comparison key: ||site||_q^q as an int for integer q,
        max|coord| for q = inf, float fallback otherwise."""
        if self.q == math.inf:
            return max(abs(int(c)) for c in site)
        if self.is_integer:
            p = int(self.q)
            return sum(abs(int(c)) ** p for c in site)
        return math.fsum(abs(c) ** self.q for c in site)

    def norm(self, site: Sequence[int]) -> float:
        if self.q == math.inf:
            return float(self.power_key(site))
        if self.q == 1.0:
            return float(self.power_key(site))
        return float(self.power_key(site)) ** (1.0 / self.q)

    def norm_array(self, coords: np.ndarray) -> np.ndarray:
        """Vectorised norm of an (N, dim) integer array."""
        a = np.abs(coords).astype(np.float64)
        if self.q == math.inf:
            return a.max(axis=-1)
        if self.q == 1.0:
            return a.sum(axis=-1)
        return (a ** self.q).sum(axis=-1) ** (1.0 / self.q)


@dataclass(frozen=True)
class LabelField:
    """Deterministic map (seed, id) -> Uniform(0,1).

    Ids are ints or tuples of ints.  The same id always yields the same
    value, values never hit 0 or 1 exactly, and distinct ids behave as
    independent uniforms.  Tree simulations derive per-node keys by folding
    child indices into the parent key, so lazily grown trees see stable
    uniforms in any evaluation order.
    """

    seed: int

    def __post_init__(self):
        object.__setattr__(self, "_root", _mix(self.seed & _MASK))

    def key_of(self, site_or_id) -> int:
        key = self._root
        if isinstance(site_or_id, (int, np.integer)):
            return _combine(key, int(site_or_id))
        for c in site_or_id:
            key = _combine(key, int(c))
        return key

    def derive_key(self, key: int, value: int) -> int:
        return _combine(key, value)

    def uniform_at(self, site_or_id) -> float:
        return _u01(self.key_of(site_or_id))

    def uniform_from_key(self, key: int) -> float:
        return _u01(key)

    # vectorised variants used by the simulators

    def key_array(self, coords: np.ndarray) -> np.ndarray:
        """Keys for an (N, dim) array of integer coordinates."""
        coords = np.asarray(coords)
        key = np.full(coords.shape[:-1], self._root, dtype=np.uint64)
        for j in range(coords.shape[-1]):
            key = _combine_np(key, coords[..., j])
        return key

    def derive_key_array(self, keys: np.ndarray, values) -> np.ndarray:
        return _combine_np(keys, np.asarray(values, dtype=np.uint64))

    def uniform_array(self, coords: np.ndarray) -> np.ndarray:
        return _u01_np(self.key_array(coords))

    def uniform_from_key_array(self, keys: np.ndarray) -> np.ndarray:
        return _u01_np(keys)


@dataclass(frozen=True)
class RmfParams:
    """Drift strength theta in [0,1] plus the distance metric."""

    theta: float
    metric: Metric

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0,1], got {self.theta}")


def lp_distance(metric: Metric, site: Sequence[int]) -> float:
    """||site||_q; exact-integer backed for integer q."""
    if len(site) < 1:
        raise ValueError("site needs at least one coordinate")
    return metric.norm(site)


def rmf_label(field: LabelField, params: RmfParams, site: Sequence[int]) -> float:
    """X_v = U_v + theta * d(0, v)."""
    return field.uniform_at(tuple(site)) + params.theta * lp_distance(params.metric, site)


def is_increasing(labels: Iterable[float]) -> bool:
    """Strictly increasing test; ties count as not increasing."""
    it = iter(labels)
    try:
        prev = next(it)
    except StopIteration:
        raise ValueError("label sequence must be nonempty") from None
    for x in it:
        if not (x > prev):
            return False
        prev = x
    return True


def uniform_at(field: LabelField, site_or_id) -> float:
    """Replayable Uniform(0,1) attached to a site or node id."""
    return field.uniform_at(site_or_id)
