"""Bayesian fitting of the staged Mallows model to censored survey data.

The posterior over (center, spread) combines an independence likelihood
across respondents, a truncated-normal prior on the spread, and a Mallows
prior on the center. Fitting runs a Metropolis-within-Gibbs chain that
alternates a Mallows-proposal move on the center with a truncated-normal
random walk on the spread, and reports the maximum-a-posteriori sample.

Two likelihood normalizations are available for censored respondents:

* ``"restricted"`` (default): each respondent's term is normalized over
  the subspace of assignments to their observed items, giving a proper
  likelihood for what was actually observable.
* ``"global"``: the dropped-pair distance is combined with the full-space
  partition function.

The two coincide exactly when no entries are missing.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import InitializationError
from .mallows import (
    DEFAULT_ENUMERATION_GUARD,
    MallowsParams,
    PartitionCache,
    _distance_vector,
    _pair_indices,
    _sample_indices,
    _space_array,
    default_cache,
    structural_class,
)
from .rankings import CentralRanking, DistanceConfig, PartialRanking, StageDomain

logger = logging.getLogger(__name__)

RESTRICTED = "restricted"
GLOBAL = "global"

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _log_std_normal_pdf(z: float) -> float:
    return -0.5 * z * z - _LOG_SQRT_2PI


def _log_std_normal_cdf(x: float) -> float:
    return math.log(0.5 * math.erfc(-x / _SQRT2))


def log_truncated_normal(value: float, scale: float = 1.0) -> float:
    """Log density of a normal(0, scale) restricted to (0, inf).

    Truncating at the location doubles the half-line mass, hence the
    log 2 term. Nonpositive values score -inf rather than raising.
    """
    if value <= 0.0 or not math.isfinite(value):
        return -math.inf
    return math.log(2.0) + _log_std_normal_pdf(value / scale) - math.log(scale)


@dataclass(frozen=True)
class PriorConfig:
    """Joint prior p(center, spread) = p(center | spread) p(spread).

    The spread gets a truncated normal (location 0) on (0, inf). The
    center gets a Mallows distribution around ``center``; its spread is
    the currently sampled spread when ``pi_spread`` is None (the coupled
    form), or the given fixed value.
    """

    center: CentralRanking
    lambda_scale: float = 1.0
    pi_spread: float | None = None

    def __post_init__(self):
        if not (self.lambda_scale > 0):
            raise ValueError(f"lambda_scale must be positive, got {self.lambda_scale}")
        if self.pi_spread is not None and not (self.pi_spread > 0):
            raise ValueError(f"pi_spread must be positive when fixed, got {self.pi_spread}")


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings. Defaults retain 1,000 samples from 1,500 iterations."""

    iterations: int = 1500
    burn_in: int = 500
    thinning: int = 1
    lambda_init: float = 1.0
    lambda_proposal_scale: float = 0.1
    seed: int = 0
    normalization: str = RESTRICTED
    start_center: CentralRanking | None = None

    def __post_init__(self):
        if self.iterations < 1 or self.burn_in < 0 or self.thinning < 1:
            raise ValueError("iterations, burn_in, thinning must be positive")
        if self.iterations <= self.burn_in:
            raise ValueError(
                f"iterations ({self.iterations}) must exceed burn_in ({self.burn_in})"
            )
        if (self.iterations - self.burn_in) % self.thinning != 0:
            raise ValueError("iterations - burn_in must be a multiple of thinning")
        if not (self.lambda_init > 0):
            raise ValueError(f"lambda_init must be positive, got {self.lambda_init}")
        if self.lambda_proposal_scale < 0:
            raise ValueError("lambda_proposal_scale must be >= 0")
        if self.normalization not in (RESTRICTED, GLOBAL):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning


@dataclass(frozen=True)
class McmcTrace:
    """Retained samples of a finished chain, in iteration order."""

    n: int
    l: int
    iterations: np.ndarray
    centers: np.ndarray
    spreads: np.ndarray
    log_posteriors: np.ndarray
    accept_rate_center: float
    accept_rate_spread: float

    def __len__(self) -> int:
        return len(self.spreads)

    @property
    def acceptance_rates(self) -> tuple[float, float]:
        return (self.accept_rate_center, self.accept_rate_spread)

    @property
    def samples(self) -> Iterator[tuple[CentralRanking, float, float]]:
        for row, spread, lp in zip(self.centers, self.spreads, self.log_posteriors):
            yield CentralRanking(tuple(int(v) for v in row)), float(spread), float(lp)


@dataclass(frozen=True)
class FitResult:
    """MAP estimate plus the trace it was read from."""

    pi_map: CentralRanking
    lambda_map: float
    trace: McmcTrace
    marginals: np.ndarray


class _Evaluator:
    """Precomputed data views and per-center statistics for fast re-evaluation.

    For each visited center the likelihood needs its summed dropped-pair
    distance to the data, the partition classes of its restrictions to each
    observed-item set, and its distance to the prior center. All of these
    are independent of the spread, so caching them per center makes spread
    moves nearly free.
    """

    def __init__(
        self,
        data: Sequence[PartialRanking],
        domain: StageDomain,
        prior: PriorConfig,
        cfg: DistanceConfig,
        cache: PartitionCache,
        normalization: str,
        guard: int,
    ):
        if len(data) == 0:
            raise ValueError("dataset is empty")
        n = data[0].n
        for k, resp in enumerate(data):
            if resp.n != n:
                raise ValueError(f"respondent {k} has {resp.n} items, expected {n}")
            resp.check_domain(domain)
        if prior.center.n != n:
            raise ValueError(
                f"prior center has {prior.center.n} items, data has {n}"
            )
        prior.center.check_domain(domain)

        self.n = n
        self.l = domain.l
        self.m = len(data)
        self.cfg = cfg
        self.cache = cache
        self.normalization = normalization
        self.guard = guard
        self.prior = prior
        self.prior_center = np.asarray(prior.center.stages, dtype=np.int32)
        self.prior_class = structural_class(prior.center)

        stages = np.array(
            [[v if v is not None else 0 for v in resp.stages] for resp in data],
            dtype=np.int32,
        )
        mask = stages > 0
        self._pair_i, self._pair_j = _pair_indices(n)
        self._data_signs = np.sign(
            stages[:, self._pair_i] - stages[:, self._pair_j]
        ).astype(np.int8)
        self._pair_valid = mask[:, self._pair_i] & mask[:, self._pair_j]

        # Respondents sharing an observed-item set share their restricted
        # partition class, so group them once.
        groups: dict[tuple[int, ...], int] = {}
        for resp in data:
            key = resp.observed_indices
            groups[key] = groups.get(key, 0) + 1
        self._observed_groups = [
            (np.asarray(key, dtype=np.int64), count) for key, count in groups.items()
        ]

        self._center_stats: dict[tuple[int, ...], tuple] = {}
        self._space_dist: OrderedDict[tuple[int, ...], np.ndarray] = OrderedDict()

    # -- per-center statistics -------------------------------------------

    def center_stats(self, center: tuple[int, ...]) -> tuple:
        hit = self._center_stats.get(center)
        if hit is not None:
            return hit
        arr = np.asarray(center, dtype=np.int32)
        csigns = np.sign(arr[self._pair_i] - arr[self._pair_j]).astype(np.int8)
        if csigns.size:
            discordant = self._pair_valid & ((self._data_signs * csigns) == -1)
            tied_one = self._pair_valid & ((self._data_signs == 0) ^ (csigns == 0))
            total_d = float(
                discordant.sum(dtype=np.int64) + self.cfg.p * tied_one.sum(dtype=np.int64)
            )
        else:
            total_d = 0.0

        psi_groups: dict[tuple[int, tuple[int, ...]], int] = {}
        for indices, count in self._observed_groups:
            sub_class = structural_class(arr[indices])
            key = (len(indices), sub_class)
            psi_groups[key] = psi_groups.get(key, 0) + count

        prior_d = _pair_distance(arr, self.prior_center, self.cfg.p)
        stats = (total_d, tuple(psi_groups.items()), prior_d, structural_class(center))
        self._center_stats[center] = stats
        return stats

    def space_distances(self, center: tuple[int, ...]) -> np.ndarray:
        hit = self._space_dist.get(center)
        if hit is not None:
            self._space_dist.move_to_end(center)
            return hit
        dist = _distance_vector(center, self.l, self.cfg.p, self.guard)
        self._space_dist[center] = dist
        if len(self._space_dist) > 16:
            self._space_dist.popitem(last=False)
        return dist

    # -- posterior pieces --------------------------------------------------

    def log_likelihood(self, stats: tuple, spread: float) -> float:
        total_d, psi_groups, _, center_class = stats
        value = -total_d / spread
        if self.normalization == RESTRICTED:
            for (r, sub_class), count in psi_groups:
                value -= count * self.cache.log_psi(
                    r, self.l, sub_class, self.cfg.p, spread, self.guard
                )
        else:
            value -= self.m * self.cache.log_psi(
                self.n, self.l, center_class, self.cfg.p, spread, self.guard
            )
        return value

    def log_prior(self, stats: tuple, spread: float) -> float:
        if spread <= 0:
            return -math.inf
        _, _, prior_d, _ = stats
        pi_spread = self.prior.pi_spread if self.prior.pi_spread is not None else spread
        pi_term = -prior_d / pi_spread - self.cache.log_psi(
            self.n, self.l, self.prior_class, self.cfg.p, pi_spread, self.guard
        )
        return log_truncated_normal(spread, self.prior.lambda_scale) + pi_term

    def log_posterior(self, stats: tuple, spread: float) -> float:
        return self.log_likelihood(stats, spread) + self.log_prior(stats, spread)

    def proposal_log_psi(self, center_class: tuple[int, ...], spread: float) -> float:
        return self.cache.log_psi(
            self.n, self.l, center_class, self.cfg.p, spread, self.guard
        )


def _pair_distance(a: np.ndarray, b: np.ndarray, p: float) -> float:
    n = a.shape[0]
    i, j = _pair_indices(n)
    if i.size == 0:
        return 0.0
    sa = np.sign(a[i] - a[j])
    sb = np.sign(b[i] - b[j])
    discordant = int(np.count_nonzero((sa * sb) == -1))
    tied_one = int(np.count_nonzero((sa == 0) ^ (sb == 0)))
    return discordant + p * tied_one


def log_likelihood(
    data: Sequence[PartialRanking],
    params: MallowsParams,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    mode: str = RESTRICTED,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    """Sum of per-respondent log densities under the given model.

    Respondents are independent; each censored respondent contributes its
    dropped-pair distance, normalized per ``mode`` (see module docstring).
    """
    if mode not in (RESTRICTED, GLOBAL):
        raise ValueError(f"unknown normalization {mode!r}")
    cache = cache if cache is not None else default_cache()
    prior = PriorConfig(center=params.center)
    ev = _Evaluator(data, params.domain, prior, cfg, cache, mode, guard)
    stats = ev.center_stats(params.center.stages)
    return ev.log_likelihood(stats, params.spread)


def log_prior(
    params: MallowsParams,
    prior: PriorConfig,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    """Log of p(center | spread) p(spread) under the joint prior."""
    cache = cache if cache is not None else default_cache()
    if prior.center.n != params.n:
        raise ValueError(
            f"prior center has {prior.center.n} items, model has {params.n}"
        )
    spread = params.spread
    if spread <= 0:
        return -math.inf
    pi_spread = prior.pi_spread if prior.pi_spread is not None else spread
    prior_d = _pair_distance(
        np.asarray(params.center.stages, dtype=np.int32),
        np.asarray(prior.center.stages, dtype=np.int32),
        cfg.p,
    )
    pi_term = -prior_d / pi_spread - cache.log_psi(
        params.n, params.l, structural_class(prior.center), cfg.p, pi_spread, guard
    )
    return log_truncated_normal(spread, prior.lambda_scale) + pi_term


def log_posterior(
    data: Sequence[PartialRanking],
    params: MallowsParams,
    prior: PriorConfig,
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    mode: str = RESTRICTED,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> float:
    """Unnormalized log posterior: log likelihood plus log prior."""
    return log_likelihood(data, params, cfg, cache, mode, guard) + log_prior(
        params, prior, cfg, cache, guard
    )


def _propose_truncated_normal(
    rng: np.random.Generator, loc: float, scale: float
) -> float:
    while True:
        value = rng.normal(loc, scale)
        if value > 0.0:
            return float(value)


def mcmc_fit(
    data: Sequence[PartialRanking],
    domain: StageDomain,
    prior: PriorConfig,
    mcmc: McmcConfig = McmcConfig(),
    cfg: DistanceConfig = DistanceConfig(),
    cache: PartitionCache | None = None,
    guard: int = DEFAULT_ENUMERATION_GUARD,
) -> FitResult:
    """Run the Metropolis-within-Gibbs chain and return the MAP sample.

    Each iteration proposes a new center from a Mallows distribution
    around the current one (accepted with the Metropolis-Hastings ratio,
    which includes the ratio of the two proposal normalizers because
    centers in different structural classes have different partition
    functions), then a new spread from a truncated normal random walk
    (with the matching truncation correction). A proposal scale of zero
    disables the spread move, pinning the spread at its initial value.
    """
    cache = cache if cache is not None else default_cache()
    ev = _Evaluator(data, domain, prior, cfg, cache, mcmc.normalization, guard)
    rng = np.random.default_rng(mcmc.seed)
    space = _space_array(ev.n, ev.l)

    start = mcmc.start_center if mcmc.start_center is not None else prior.center
    if start.n != ev.n:
        raise ValueError(f"start center has {start.n} items, data has {ev.n}")
    start.check_domain(domain)

    center = tuple(start.stages)
    spread = mcmc.lambda_init
    stats = ev.center_stats(center)
    ll = ev.log_likelihood(stats, spread)
    lp = ev.log_prior(stats, spread)
    if not math.isfinite(ll):
        raise InitializationError(
            f"initial log-likelihood is not finite ({ll}) at the starting state"
        )
    if not math.isfinite(lp):
        raise InitializationError(
            f"initial log-prior is not finite ({lp}) at the starting state"
        )
    log_post = ll + lp

    retained = mcmc.retained
    out_iters = np.empty(retained, dtype=np.int64)
    out_centers = np.empty((retained, ev.n), dtype=np.int32)
    out_spreads = np.empty(retained, dtype=np.float64)
    out_log_posts = np.empty(retained, dtype=np.float64)

    accept_center = 0
    accept_spread = 0
    scale = mcmc.lambda_proposal_scale
    write = 0

    for t in range(1, mcmc.iterations + 1):
        # Center move: draw from Mallows(center, spread), exact.
        dist = ev.space_distances(center)
        idx = int(_sample_indices(dist, spread, rng, 1)[0])
        proposed = tuple(int(v) for v in space[idx])
        stats_new = ev.center_stats(proposed)
        log_post_new = ev.log_posterior(stats_new, spread)
        log_alpha = (log_post_new - log_post) + (
            ev.proposal_log_psi(stats[3], spread)
            - ev.proposal_log_psi(stats_new[3], spread)
        )
        u = rng.random()
        if log_alpha >= 0.0 or u < math.exp(log_alpha):
            center, stats, log_post = proposed, stats_new, log_post_new
            accept_center += 1

        # Spread move: truncated normal random walk.
        if scale > 0.0:
            proposed_spread = _propose_truncated_normal(rng, spread, scale)
            log_post_new = ev.log_posterior(stats, proposed_spread)
            log_alpha = (log_post_new - log_post) + (
                _log_std_normal_cdf(spread / scale)
                - _log_std_normal_cdf(proposed_spread / scale)
            )
            u = rng.random()
            if log_alpha >= 0.0 or u < math.exp(log_alpha):
                spread, log_post = proposed_spread, log_post_new
                accept_spread += 1

        if t > mcmc.burn_in and (t - mcmc.burn_in - 1) % mcmc.thinning == 0:
            out_iters[write] = t
            out_centers[write] = center
            out_spreads[write] = spread
            out_log_posts[write] = log_post
            write += 1

    rate_center = accept_center / mcmc.iterations
    rate_spread = accept_spread / mcmc.iterations if scale > 0.0 else 0.0
    if scale > 0.0 and (rate_spread in (0.0, 1.0) or rate_center in (0.0, 1.0)):
        logger.warning(
            "degenerate acceptance rates (center=%.3f, spread=%.3f); "
            "the chain is unlikely to have mixed",
            rate_center,
            rate_spread,
        )

    trace = McmcTrace(
        n=ev.n,
        l=ev.l,
        iterations=out_iters,
        centers=out_centers,
        spreads=out_spreads,
        log_posteriors=out_log_posts,
        accept_rate_center=rate_center,
        accept_rate_spread=rate_spread,
    )
    pi_map, lambda_map = map_estimate(trace)
    return FitResult(
        pi_map=pi_map,
        lambda_map=lambda_map,
        trace=trace,
        marginals=stage_marginals(trace),
    )


def map_estimate(trace: McmcTrace) -> tuple[CentralRanking, float]:
    """The retained sample with the highest stored log posterior.

    Ties resolve to the earliest sample.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    best = int(np.argmax(trace.log_posteriors))
    return (
        CentralRanking(tuple(int(v) for v in trace.centers[best])),
        float(trace.spreads[best]),
    )


def stage_marginals(trace: McmcTrace) -> np.ndarray:
    """Per-item posterior stage frequencies as an (n, l) matrix.

    Entry (i, s-1) is the fraction of retained samples assigning item i
    to stage s; every row sums to one.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    out = np.empty((trace.n, trace.l), dtype=np.float64)
    for s in range(1, trace.l + 1):
        out[:, s - 1] = np.mean(trace.centers == s, axis=0)
    return out
