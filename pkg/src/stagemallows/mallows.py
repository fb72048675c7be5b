"""The Mallows distribution over the space of stage assignments {1..l}^n.

The probability of a ranking x decays exponentially in its penalized
Kendall tau distance from a central ranking:

    f(x) = exp(-d_p(x, center) / spread) / psi(spread)

where psi is the normalizing sum over all l^n assignments. Everything
here works by exact enumeration of that space, protected by a capacity
guard, with the expensive distance scans cached per structural class.
"""

from __future__ import annotations

import itertools
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityError
from .rankings import CentralRanking, DistanceConfig, StageDomain, kendall_tau_partial

#: Largest l^n the enumeration paths will touch before failing loudly.
DEFAULT_ENUMERATION_GUARD = 2**24


@dataclass(frozen=True)
class MallowsParams:
    """A central ranking, a strictly positive spread, and the stage domain.

    Small spread concentrates mass at the center; large spread flattens
    the distribution toward uniform. Zero is a limit, not a parameter.
    """

    center: CentralRanking
    spread: float
    domain: StageDomain

    def __post_init__(self):
        if not (self.spread > 0.0) or not math.isfinite(self.spread):
            raise ValueError(f"spread must be a positive finite real, got {self.spread}")
        self.center.check_domain(self.domain)

    @property
    def n(self) -> int:
        return self.center.n

    @property
    def l(self) -> int:
        return self.domain.l


def check_guard(n: int, l: int, guard: int = DEFAULT_ENUMERATION_GUARD) -> int:
    """Return l**n, or raise CapacityError when it exceeds the guard."""
    size = l**n
    if size > guard:
        raise CapacityError(n, l, guard)
    return size


def structural_class(center: CentralRanking | Sequence[int]) -> tuple[int, ...]:
    """Canonical cache key for the center's bucket structure.

    The distance multiset over the space is unchanged by relabeling items
    and by reversing the stage order, but not by arbitrary reorderings of
    the bucket sizes. The key is therefore the occupied bucket sizes in
    stage order, canonicalized against their reversal.
    """
    stages = center.stages if isinstance(center, CentralRanking) else tuple(center)
    counts: dict[int, int] = {}
    for value in stages:
        counts[value] = counts.get(value, 0) + 1
    ordered = tuple(counts[s] for s in sorted(counts))
    return min(ordered, ordered[::-1])


def enumerate_space(
    n: int, l: int, guard: int = DEFAULT_ENUMERATION_GUARD
) -> Iterator[CentralRanking]:
    """Yield every assignment in {1..l}^n, in lexicographic order."""
    if n < 1 or l < 1:
        raise ValueError(f"need n >= 1 and l >= 1, got n={n}, l={l}")
    check_guard(n, l, guard)
    for stages in itertools.product(range(1, l + 1), repeat=n):
        yield CentralRanking(stages)


@lru_cache(maxsize=32)
def _space_array(n: int, l: int) -> np.ndarray:
    """All of {1..l}^n as a read-only (l**n, n) array, lexicographic."""
    size = l**n
    dtype = np.min_scalar_type(l)
    arr = np.empty((size, n), dtype=dtype)
    idx = np.arange(size)
    for pos in range(n):
        arr[:, pos] = (idx // l ** (n - 1 - pos)) % l + 1
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=32)
def _pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, k=1)
    return i.astype(np.int64), j.astype(np.int64)


@lru_cache(maxsize=32)
def _space_signs(n: int, l: int) -> np.ndarray:
    """sign(space[:, i] - space[:, j]) for each item pair, int8 (l**n, P)."""
    space = _space_array(n, l).astype(np.int32)
    i, j = _pair_indices(n)
    signs = np.sign(space[:, i] - space[:, j]).astype(np.int8)
    signs.setflags(write=False)
    return signs


def _center_signs(center: Sequence[int]) -> np.ndarray:
    arr = np.asarray(center, dtype=np.int32)
    i, j = _pair_indices(arr.shape[0])
    return np.sign(arr[i] - arr[j]).astype(np.int8)


def _distance_components(
    center: Sequence[int], l: int, guard: int = DEFAULT_ENUMERATION_GUARD
) -> tuple[np.ndarray, np.ndarray]:
    """Per-space-point discordant and tied-in-one pair counts vs center."""
    n = len(center)
    check_guard(n, l, guard)
    space_signs = _space_signs(n, l)
    csigns = _center_signs(center)
    if csigns.size == 0:
        size = l**n
        zero = np.zeros(size, dtype=np.int64)
        return zero, zero.copy()
    discordant = (space_signs * csigns[np.newaxis, :]) == -1
    tied_one = (space_signs == 0) ^ (csigns == 0)[np.newaxis, :]
    return (
        discordant.sum(axis=1, dtype=np.int64),
        tied_one.sum(axis=1, dtype=np.int64),
    )


def _distance_vector(
    center: Sequence[int], l: int, p: float, guard: int = DEFAULT_ENUMERATION_GUARD
) -> np.ndarray:
    d_counts, e_counts = _distance_components(center, l, guard)
    return d_counts + p * e_counts


def _canonical_center(class_key: tuple[int, ...]) -> tuple[int, ...]:
    """A representative center whose structural class is class_key."""
    stages: list[int] = []
    for stage, size in enumerate(class_key, start=1):
        stages.extend([stage] * size)
    return tuple(stages)


def _log_sum_exp(values: np.ndarray) -> float:
    top = float(np.max(values))
    return top + math.log(float(np.sum(np.exp(values - top))))


class PartitionCache:
    """Memoized partition function values and distance histograms.

    The histogram of (discordant, tied-in-one) pair counts over the whole
    space is cached per (n, l, structural class); from it, log psi for any
    (p, spread) is a short log-sum-exp instead of a fresh l^n scan. Psi
    values themselves are cached with the spread quantized to 12 decimal
    digits, in an LRU bounded so long chains with ever-changing spreads
    cannot grow the cache without limit. Safe for concurrent use; racing
    writers recompute identical values.
    """

    _LAMBDA_DIGITS = 12
    _MAX_PSI_ENTRIES = 65536

    def __init__(self):
        self._lock = threading.Lock()
        self._histograms: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._log_psi: "OrderedDict[tuple, float]" = OrderedDict()

    def histogram(
        self, n: int, l: int, class_key: tuple[int, ...], guard: int = DEFAULT_ENUMERATION_GUARD
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(discordant counts, tied-one counts, multiplicities) over the space."""
        key = (n, l, class_key)
        with self._lock:
            hit = self._histograms.get(key)
        if hit is not None:
            return hit
        d_counts, e_counts = _distance_components(_canonical_center(class_key), l, guard)
        # Pack the two small nonnegative counts into one integer for np.unique.
        packer = int(d_counts.max()) + int(e_counts.max()) + 2
        packed, mult = np.unique(d_counts * packer + e_counts, return_counts=True)
        entry = (packed // packer, packed % packer, mult)
        with self._lock:
            self._histograms[key] = entry
        return entry

    def log_psi(
        self,
        n: int,
        l: int,
        class_key: tuple[int, ...],
        p: float,
        spread: float,
        guard: int = DEFAULT_ENUMERATION_GUARD,
    ) -> float:
        key = (n, l, p, class_key, round(spread, self._LAMBDA_DIGITS))
        with self._lock:
            hit = self._log_psi.get(key)
            if hit is not None:
                self._log_psi.move_to_end(key)
                return hit
        d_counts, e_counts, mult = self.histogram(n, l, class_key, guard)
        # Near-zero spreads legitimately drive exponents to -inf; the
        # zero-distance entry keeps the log-sum-exp finite.
        with np.errstate(over="ignore"):
            exponents = -(d_counts + p * e_counts) / spread + np.log(mult)
        value = _log_sum_exp(exponents)
        with self._lock:
            self._log_psi[key] = value
            while len(self._log_psi) > self._MAX_PSI_ENTRIES:
                self._log_psi.popitem(last=False)
        return value


_DEFAULT_CACHE = PartitionCache()


def default_cache() -> PartitionCache:
    """The process-wide cache used when callers do not supply one."""
    return _DEFAULT_CACHE


def log_partition_function(
    params: MallowsParams,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    cache = cache if cache is not None else _DEFAULT_CACHE
    return cache.log_psi(
        params.n, params.l, structural_class(params.center), cfg.p, params.spread, guard
    )


def partition_function(
    params: MallowsParams,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    """psi(spread) = sum over {1..l}^n of exp(-d_p(x, center) / spread).

    psi always lies in [1, l^n], so returning it in natural scale is safe;
    the summation itself happens in log space.
    """
    return math.exp(log_partition_function(params, cfg, cache, guard))


def log_pmf(
    x: CentralRanking,
    params: MallowsParams,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    """Log-probability of a complete ranking under the model.

    Computed as -d_p(x, center)/spread - log psi so the pmf sums to one
    over the enumerated space.
    """
    if x.n != params.n:
        raise ValueError(f"ranking has {x.n} items, center has {params.n}")
    if any(v is None for v in x.stages):
        raise ValueError("log_pmf needs a complete ranking (no missing entries)")
    x.check_domain(params.domain)
    d = kendall_tau_partial(x, params.center, cfg)
    return -d / params.spread - log_partition_function(params, cfg, cache, guard)


def _sample_indices(
    distances: np.ndarray, spread: float, rng: np.random.Generator, count: int
) -> np.ndarray:
    weights = np.exp(-distances / spread)
    cdf = np.cumsum(weights)
    draws = rng.random(count) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, draws, side="right"), len(cdf) - 1)


def sample(
    params: MallowsParams,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    rng: np.random.Generator | None = None,
    count: int = 1,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> list[CentralRanking]:
    """Draw exact i.i.d. samples by CDF inversion over the enumerated pmf."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = rng if rng is not None else np.random.default_rng()
    distances = _distance_vector(params.center.stages, params.l, cfg.p, guard)
    space = _space_array(params.n, params.l)
    idx = _sample_indices(distances, params.spread, rng, count)
    return [CentralRanking(tuple(int(v) for v in space[i])) for i in idx]
