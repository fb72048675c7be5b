import math

import numpy as np
import pytest

from stagemallows.errors import InitializationError
from stagemallows.inference import (
    GLOBAL,
    RESTRICTED,
    McmcConfig,
    PriorConfig,
    log_likelihood,
    log_posterior,
    log_prior,
    log_truncated_normal,
    map_estimate,
    mcmc_fit,
    stage_marginals,
)
from stagemallows.mallows import MallowsParams, PartitionCache, partition_function
from stagemallows.rankings import CentralRanking, PartialRanking, StageDomain
from stagemallows.synth import SynthConfig, generate

from oracles import (
    full_space,
    log_trunc_normal,
    naive_log_likelihood_global,
    naive_log_likelihood_restricted,
    naive_log_posterior,
)


def central(*stages):
    return CentralRanking(tuple(stages))


def params(stages, spread, l):
    return MallowsParams(central(*stages), spread, StageDomain(l))


class TestTruncatedNormal:
    def test_closed_form_at_one(self):
        want = math.log(2.0 * math.exp(-0.5) / math.sqrt(2 * math.pi))
        assert log_truncated_normal(1.0) == pytest.approx(want, rel=1e-12)

    def test_zero_and_negative_score_minus_inf(self):
        assert log_truncated_normal(0.0) == -math.inf
        assert log_truncated_normal(-0.3) == -math.inf

    def test_small_value_limit(self):
        want = math.log(2.0) - 0.5 * math.log(2 * math.pi)
        assert log_truncated_normal(1e-12) == pytest.approx(want, abs=1e-9)


class TestLogLikelihood:
    def test_single_complete_respondent_at_center(self):
        p = params([1, 2], 1.0, 2)
        ll = log_likelihood([PartialRanking((1, 2))], p)
        assert ll == pytest.approx(-math.log(partition_function(p)), rel=1e-12)

    def test_duplicated_dataset_scales_linearly(self):
        p = params([1, 2, 2], 0.8, 3)
        one = [PartialRanking((1, 3, 2))]
        five = one * 5
        assert log_likelihood(five, p) == pytest.approx(
            5 * log_likelihood(one, p), rel=1e-12
        )

    def test_single_observed_item_is_uniform(self):
        p = params([1, 2, 2], 1.0, 3)
        data = [PartialRanking((None, 2, None))]
        assert log_likelihood(data, p, mode=RESTRICTED) == pytest.approx(
            -math.log(3), rel=1e-12
        )

    def test_modes_coincide_without_missingness(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 5))
            l = int(rng.integers(2, 4))
            p = params([int(v) for v in rng.integers(1, l + 1, n)], 1.3, l)
            data = [
                PartialRanking(tuple(int(v) for v in rng.integers(1, l + 1, n)))
                for _ in range(6)
            ]
            a = log_likelihood(data, p, mode=RESTRICTED)
            b = log_likelihood(data, p, mode=GLOBAL)
            assert a == pytest.approx(b, abs=1e-12)

    def test_restricted_matches_naive_oracle(self):
        center = (1, 2, 2, 3)
        p = params(center, 0.9, 3)
        data_raw = [
            (1, 2, None, 3),
            (2, None, None, 1),
            (1, 1, 2, 2),
            (3, 2, 1, None),
        ]
        data = [PartialRanking(t) for t in data_raw]
        want = naive_log_likelihood_restricted(data_raw, center, 3, 0.9)
        assert log_likelihood(data, p) == pytest.approx(want, rel=1e-10)

    def test_global_matches_naive_oracle(self):
        center = (2, 1, 3, 3)
        p = params(center, 1.4, 3)
        data_raw = [
            (1, 2, None, 3),
            (2, 2, 1, None),
            (1, 1, 2, 2),
        ]
        data = [PartialRanking(t) for t in data_raw]
        want = naive_log_likelihood_global(data_raw, center, 3, 1.4)
        assert log_likelihood(data, p, mode=GLOBAL) == pytest.approx(want, rel=1e-10)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            log_likelihood([], params([1, 2], 1.0, 2))

    def test_mismatched_items_rejected(self):
        with pytest.raises(ValueError):
            log_likelihood([PartialRanking((1, 2, 3))], params([1, 2], 1.0, 3))


class TestLogPrior:
    def test_modal_center_term(self):
        prior = PriorConfig(center=central(1, 2, 2))
        p = params([1, 2, 2], 1.0, 3)
        cache = PartitionCache()
        got = log_prior(p, prior, cache=cache)
        want = log_truncated_normal(1.0) - math.log(
            partition_function(p, cache=cache)
        )
        assert got == pytest.approx(want, rel=1e-12)

    def test_center_prior_is_maximal_at_prior_center(self):
        prior = PriorConfig(center=central(1, 2, 3))
        cache = PartitionCache()
        at_center = log_prior(params([1, 2, 3], 1.0, 3), prior, cache=cache)
        for stages in full_space(3, 3):
            other = log_prior(params(stages, 1.0, 3), prior, cache=cache)
            assert other <= at_center + 1e-12

    def test_fixed_spread_decouples(self):
        prior = PriorConfig(center=central(1, 2), pi_spread=2.0)
        cache = PartitionCache()
        a = log_prior(params([2, 1], 0.5, 2), prior, cache=cache)
        b = log_prior(params([2, 1], 3.0, 2), prior, cache=cache)
        # Only the truncated-normal term may differ when the pi spread is fixed.
        assert a - log_trunc_normal(0.5) == pytest.approx(
            b - log_trunc_normal(3.0), rel=1e-12
        )

    def test_coupled_prior_concentration_limit(self):
        # As the spread shrinks, the center prior collapses onto the prior
        # center: the center term goes to 0 there and to -inf elsewhere.
        prior = PriorConfig(center=central(1, 2))
        cache = PartitionCache()
        tiny = 1e-3
        at_center = log_prior(params([1, 2], tiny, 2), prior, cache=cache)
        assert at_center - log_trunc_normal(tiny) == pytest.approx(0.0, abs=1e-12)
        elsewhere = log_prior(params([2, 1], tiny, 2), prior, cache=cache)
        assert elsewhere < -100

    def test_matches_naive_posterior_factorization(self):
        center = (1, 3, 2)
        prior_center = (1, 2, 2)
        data_raw = [(1, 2, 2), (2, 3, 1), (1, None, 2)]
        p = params(center, 1.7, 3)
        prior = PriorConfig(center=central(*prior_center))
        data = [PartialRanking(t) for t in data_raw]
        got = log_posterior(data, p, prior)
        want = naive_log_posterior(data_raw, center, 3, 1.7, prior_center)
        assert got == pytest.approx(want, rel=1e-10)


class TestMcmcConfig:
    def test_default_retains_one_thousand(self):
        assert McmcConfig().retained == 1000

    def test_rejects_burn_in_past_iterations(self):
        with pytest.raises(ValueError):
            McmcConfig(iterations=100, burn_in=100)

    def test_rejects_ragged_thinning(self):
        with pytest.raises(ValueError):
            McmcConfig(iterations=110, burn_in=10, thinning=3)

    def test_rejects_bad_normalization(self):
        with pytest.raises(ValueError):
            McmcConfig(normalization="bogus")


def _synthetic(n, l, spread, m, seed, missing=0.0):
    stages = [1 + (i * l) // n for i in range(n)]
    truth = MallowsParams(central(*stages), spread, StageDomain(l))
    data, _ = generate(
        SynthConfig(truth=truth, size=m, missing_percent=missing, seed=seed)
    )
    return data, truth


class TestMcmcFit:
    def test_determinism(self):
        data, truth = _synthetic(4, 3, 1.0, 20, seed=5)
        prior = PriorConfig(center=truth.center)
        mcmc = McmcConfig(iterations=300, burn_in=100, seed=11)
        a = mcmc_fit(data, truth.domain, prior, mcmc)
        b = mcmc_fit(data, truth.domain, prior, mcmc)
        assert a.pi_map == b.pi_map
        assert a.lambda_map == b.lambda_map
        assert np.array_equal(a.trace.centers, b.trace.centers)
        assert np.array_equal(a.trace.spreads, b.trace.spreads)
        assert np.array_equal(a.trace.log_posteriors, b.trace.log_posteriors)

    def test_shared_and_private_caches_agree(self):
        data, truth = _synthetic(3, 3, 0.7, 12, seed=2)
        prior = PriorConfig(center=truth.center)
        mcmc = McmcConfig(iterations=200, burn_in=100, seed=3)
        shared = PartitionCache()
        a = mcmc_fit(data, truth.domain, prior, mcmc, cache=shared)
        b = mcmc_fit(data, truth.domain, prior, mcmc, cache=PartitionCache())
        assert a.pi_map == b.pi_map
        assert np.array_equal(a.trace.spreads, b.trace.spreads)

    def test_recovers_center_from_clean_concentrated_data(self):
        data, truth = _synthetic(5, 3, 0.1, 100, seed=7)
        prior = PriorConfig(center=truth.center)
        mcmc = McmcConfig(iterations=600, burn_in=100, seed=13)
        result = mcmc_fit(data, truth.domain, prior, mcmc)
        assert result.pi_map == truth.center

    def test_trace_log_posterior_recomputes(self):
        data, truth = _synthetic(4, 3, 1.0, 15, seed=9)
        prior = PriorConfig(center=truth.center)
        mcmc = McmcConfig(iterations=240, burn_in=40, seed=1)
        result = mcmc_fit(data, truth.domain, prior, mcmc)
        for center, spread, stored in list(result.trace.samples)[::50]:
            p = MallowsParams(center, spread, truth.domain)
            again = log_posterior(data, p, prior)
            assert stored == pytest.approx(again, abs=1e-9)

    def test_map_attains_trace_maximum(self):
        data, truth = _synthetic(4, 2, 0.8, 10, seed=21)
        prior = PriorConfig(center=truth.center)
        result = mcmc_fit(data, truth.domain, prior, McmcConfig(iterations=150, burn_in=50, seed=2))
        best = result.trace.log_posteriors.max()
        idx = int(np.argmax(result.trace.log_posteriors))
        assert result.trace.log_posteriors[idx] == best
        assert result.pi_map.stages == tuple(int(v) for v in result.trace.centers[idx])

    def test_start_center_override(self):
        data, truth = _synthetic(3, 2, 1.0, 8, seed=4)
        prior = PriorConfig(center=truth.center)
        start = central(2, 2, 2)
        result = mcmc_fit(
            data,
            truth.domain,
            prior,
            McmcConfig(iterations=60, burn_in=10, seed=5, start_center=start),
        )
        assert len(result.trace) == 50

    def test_acceptance_rates_healthy(self):
        data, truth = _synthetic(4, 3, 1.0, 30, seed=31)
        prior = PriorConfig(center=truth.center)
        result = mcmc_fit(data, truth.domain, prior, McmcConfig(iterations=1500, burn_in=500, seed=8))
        for rate in result.trace.acceptance_rates:
            assert 0.01 < rate < 0.99

    def test_zero_proposal_scale_pins_spread(self):
        data, truth = _synthetic(3, 2, 1.0, 8, seed=6)
        prior = PriorConfig(center=truth.center, pi_spread=1.0)
        result = mcmc_fit(
            data,
            truth.domain,
            prior,
            McmcConfig(
                iterations=100, burn_in=50, seed=7, lambda_init=0.9,
                lambda_proposal_scale=0.0,
            ),
        )
        assert np.all(result.trace.spreads == 0.9)
        assert result.trace.accept_rate_spread == 0.0


class TestChainTargetsExactPosterior:
    def test_pinned_spread_matches_enumerated_conditional(self):
        # Spread pinned via a zero proposal scale and a fixed-spread center
        # prior; the center chain must then match the exact conditional
        # posterior over all 8 centers in total variation.
        data, truth = _synthetic(3, 2, 1.0, 5, seed=12, missing=0.0)
        spread = 1.0
        prior = PriorConfig(center=truth.center, pi_spread=spread)
        mcmc = McmcConfig(
            iterations=205_000,
            burn_in=5_000,
            seed=99,
            lambda_init=spread,
            lambda_proposal_scale=0.0,
        )
        result = mcmc_fit(data, truth.domain, prior, mcmc)

        raw = [tuple(r.stages) for r in data]
        log_weights = {}
        for stages in full_space(3, 2):
            lp = naive_log_posterior(
                raw, stages, 2, spread, truth.center.stages, pi_spread=spread
            )
            lp -= log_trunc_normal(spread)  # constant once spread is pinned
            log_weights[stages] = lp
        top = max(log_weights.values())
        weights = {k: math.exp(v - top) for k, v in log_weights.items()}
        total = sum(weights.values())
        exact = {k: v / total for k, v in weights.items()}

        counts = {}
        for row in result.trace.centers:
            key = tuple(int(v) for v in row)
            counts[key] = counts.get(key, 0) + 1
        empirical = {k: c / len(result.trace) for k, c in counts.items()}
        tv = 0.5 * sum(
            abs(exact.get(k, 0.0) - empirical.get(k, 0.0))
            for k in set(exact) | set(empirical)
        )
        assert tv < 0.02


class TestMapMatchesBruteForce:
    def test_tiny_instance_joint_mode(self):
        # Exhaustive maximization over all 8 centers and a spread grid
        # must agree with the chain's MAP on a decisively peaked posterior.
        data, truth = _synthetic(3, 2, 0.7, 5, seed=6)
        raw = [tuple(r.stages) for r in data]
        grid = [j * 0.02 for j in range(1, 251)]
        scored = []
        for stages in full_space(3, 2):
            best = max(
                naive_log_posterior(
                    raw, stages, 2, lam, truth.center.stages
                )
                for lam in grid
            )
            scored.append((best, stages))
        oracle_map = max(scored)[1]

        prior = PriorConfig(center=truth.center)
        result = mcmc_fit(
            data, truth.domain, prior, McmcConfig(iterations=2000, burn_in=500, seed=3)
        )
        assert result.pi_map.stages == oracle_map


class TestTraceOps:
    def test_map_estimate_tie_breaks_earliest(self):
        from stagemallows.inference import McmcTrace

        trace = McmcTrace(
            n=2,
            l=2,
            iterations=np.array([1, 2, 3]),
            centers=np.array([[1, 2], [2, 1], [1, 1]]),
            spreads=np.array([1.0, 2.0, 3.0]),
            log_posteriors=np.array([-5.0, -4.0, -4.0]),
            accept_rate_center=0.5,
            accept_rate_spread=0.5,
        )
        center, spread = map_estimate(trace)
        assert center.stages == (2, 1)
        assert spread == 2.0

    def test_map_estimate_single_sample(self):
        from stagemallows.inference import McmcTrace

        trace = McmcTrace(
            n=1,
            l=2,
            iterations=np.array([1]),
            centers=np.array([[2]]),
            spreads=np.array([0.4]),
            log_posteriors=np.array([-1.0]),
            accept_rate_center=1.0,
            accept_rate_spread=1.0,
        )
        assert map_estimate(trace) == (central(2), 0.4)

    def test_map_estimate_empty_trace_rejected(self):
        from stagemallows.inference import McmcTrace

        trace = McmcTrace(
            n=1,
            l=2,
            iterations=np.empty(0, dtype=int),
            centers=np.empty((0, 1), dtype=int),
            spreads=np.empty(0),
            log_posteriors=np.empty(0),
            accept_rate_center=0.0,
            accept_rate_spread=0.0,
        )
        with pytest.raises(ValueError):
            map_estimate(trace)
        with pytest.raises(ValueError):
            stage_marginals(trace)

    def test_marginals_rows_sum_to_one(self):
        data, truth = _synthetic(4, 3, 1.5, 12, seed=14)
        prior = PriorConfig(center=truth.center)
        result = mcmc_fit(data, truth.domain, prior, McmcConfig(iterations=200, burn_in=100, seed=3))
        sums = result.marginals.sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-9)

    def test_degenerate_trace_gives_one_hot_marginals(self):
        from stagemallows.inference import McmcTrace

        trace = McmcTrace(
            n=2,
            l=3,
            iterations=np.array([1, 2]),
            centers=np.array([[1, 3], [1, 3]]),
            spreads=np.array([1.0, 1.0]),
            log_posteriors=np.array([-1.0, -1.0]),
            accept_rate_center=0.0,
            accept_rate_spread=0.0,
        )
        marg = stage_marginals(trace)
        assert np.array_equal(marg, np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))

    def test_high_consensus_marginal_mode_matches_truth(self):
        data, truth = _synthetic(4, 3, 0.05, 60, seed=17)
        prior = PriorConfig(center=truth.center)
        result = mcmc_fit(data, truth.domain, prior, McmcConfig(iterations=400, burn_in=100, seed=23))
        modes = result.marginals.argmax(axis=1) + 1
        assert tuple(int(v) for v in modes) == truth.center.stages


class TestInitializationFailure:
    def test_error_names_offending_term(self):
        # A subnormal starting spread sends the likelihood term to -inf.
        data, truth = _synthetic(3, 2, 1.0, 5, seed=1)
        prior = PriorConfig(center=truth.center)
        bad = McmcConfig(iterations=10, burn_in=5, seed=0, lambda_init=1e-320)
        with pytest.raises(InitializationError) as err:
            mcmc_fit(data, truth.domain, prior, bad)
        assert "log-likelihood" in str(err.value)
