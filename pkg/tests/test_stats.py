"""Statistics tests: PMFs, TV distance, Wilson intervals, correlation."""

import math

import numpy as np
import pytest

from boxrelax.stats import (
    binomial_reference_pmf,
    empirical_pmf,
    pairwise_error_correlation,
    success_probability,
    summarize_trials,
    tv_distance_to_poisson,
    wilson_interval,
)
from boxrelax.theory import poisson_pmf


def _poisson_sampler(lam, size, seed):
    # inverse-CDF draws on top of the pmf under test, with external uniforms
    ks = np.arange(0, 200)
    cdf = np.cumsum([poisson_pmf(lam, int(k)) for k in ks])
    u = np.random.default_rng(seed).uniform(size=size)
    return ks[np.searchsorted(cdf, u)]


class TestEmpiricalPmf:
    def test_counting(self):
        assert empirical_pmf([0, 0, 1, 2]) == {0: 0.5, 1: 0.25, 2: 0.25}

    def test_degenerate(self):
        assert empirical_pmf([0, 0, 0]) == {0: 1.0}

    def test_poisson_draws_close_in_tv(self):
        draws = _poisson_sampler(1.1, 10**4, seed=606)
        pmf = empirical_pmf(draws.tolist())
        assert tv_distance_to_poisson(pmf, 1.1) < 0.03

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_pmf([])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            empirical_pmf([0, -1])


class TestTvDistance:
    def test_self_distance(self):
        pmf = {k: poisson_pmf(1.1, k) for k in range(51)}
        missing = 1.0 - sum(pmf.values())
        pmf[0] += missing  # renormalise the truncation into the head
        assert tv_distance_to_poisson(pmf, 1.1) <= missing + 1e-12

    def test_both_degenerate_at_zero(self):
        assert tv_distance_to_poisson({0: 1.0}, 0.0) == 0.0

    def test_hand_computed_value(self):
        # pois(ln 2) has mass 1/2 at zero: TV = (|1 - 1/2| + 1/2)/2 = 1/2
        assert tv_distance_to_poisson({0: 1.0}, math.log(2.0)) == pytest.approx(
            0.5, abs=1e-12
        )

    def test_matches_double_loop_on_small_supports(self):
        rng = np.random.default_rng(1819)
        for _ in range(20):
            lam = rng.uniform(0.0, 4.0)
            raw = rng.uniform(0.0, 1.0, size=6)
            probs = raw / raw.sum()
            pmf = {k: float(v) for k, v in enumerate(probs)}
            direct = 0.5 * sum(
                abs(pmf.get(k, 0.0) - poisson_pmf(lam, k)) for k in range(400)
            )
            assert tv_distance_to_poisson(pmf, lam) == pytest.approx(direct, abs=1e-12)

    def test_order_invariance_through_pmf(self):
        values = [3, 0, 1, 0, 2, 0, 1]
        a = tv_distance_to_poisson(empirical_pmf(values), 1.1)
        b = tv_distance_to_poisson(empirical_pmf(sorted(values)), 1.1)
        assert a == b

    def test_bad_pmf_rejected(self):
        with pytest.raises(ValueError):
            tv_distance_to_poisson({0: 0.4}, 1.0)
        with pytest.raises(ValueError):
            tv_distance_to_poisson({-1: 1.0}, 1.0)


class TestSuccessProbability:
    def test_all_successes(self):
        p_hat, lo, hi = success_probability([0] * 100)
        assert p_hat == 1.0 and hi == 1.0
        assert lo == pytest.approx(0.963006501793, abs=1e-9)

    def test_no_successes(self):
        p_hat, lo, hi = success_probability([1, 2, 3])
        assert p_hat == 0.0 and lo == 0.0

    def test_half_width(self):
        p_hat, lo, hi = success_probability([0] * 200 + [1] * 200)
        assert p_hat == 0.5
        assert hi - lo == pytest.approx(0.0975309916606, abs=1e-9)

    def test_interval_properties_random(self):
        rng = np.random.default_rng(2021)
        for _ in range(200):
            n = int(rng.integers(1, 500))
            k = int(rng.integers(0, n + 1))
            lo, hi = wilson_interval(k, n)
            assert 0.0 <= lo <= k / n <= hi <= 1.0


class TestPairwiseErrorCorrelation:
    def test_independent_simulated_bits(self):
        rng = np.random.default_rng(99)
        m = rng.uniform(size=(10**4, 10)) < 0.005
        assert abs(pairwise_error_correlation(m)) < 0.03

    def test_duplicated_columns(self):
        rng = np.random.default_rng(100)
        col = rng.uniform(size=200) < 0.4
        m = np.column_stack([col, col, col])
        assert pairwise_error_correlation(m) == pytest.approx(1.0, abs=1e-12)

    def test_complementary_columns(self):
        rng = np.random.default_rng(101)
        col = rng.uniform(size=200) < 0.5
        m = np.column_stack([col, ~col])
        assert pairwise_error_correlation(m) == pytest.approx(-1.0, abs=1e-12)

    def test_degenerate_rejected(self):
        m = np.zeros((50, 4), dtype=bool)
        with pytest.raises(ValueError):
            pairwise_error_correlation(m)

    def test_too_few_trials_rejected(self):
        with pytest.raises(ValueError):
            pairwise_error_correlation(np.zeros((10, 4), dtype=bool))


class TestBinomialReference:
    def test_degenerate_q(self):
        assert binomial_reference_pmf(5, 0.0) == {0: 1.0}

    def test_single_trial(self):
        pmf = binomial_reference_pmf(1, 0.3)
        assert pmf[0] == pytest.approx(0.7, abs=1e-15)
        assert pmf[1] == pytest.approx(0.3, abs=1e-15)

    def test_normalisation_large(self):
        pmf = binomial_reference_pmf(10**4, 3e-4)
        assert abs(sum(pmf.values()) - 1.0) <= 1e-12
        central = binomial_reference_pmf(10**4, 0.37)
        assert abs(sum(central.values()) - 1.0) <= 1e-12

    def test_pointwise_against_scipy(self):
        from scipy.stats import binom

        for p, q in ((17, 0.31), (500, 0.02), (10**4, 0.37)):
            pmf = binomial_reference_pmf(p, q)
            ref = binom.pmf(np.arange(p + 1), p, q)
            mask = ref > 1e-300
            ours = np.array([pmf[k] for k in range(p + 1)])
            assert np.max(np.abs(ours[mask] - ref[mask]) / ref[mask]) < 1e-9

    def test_small_numbers_collapse(self):
        # the classical q*lambda bound puts this around 6e-3
        pmf = binomial_reference_pmf(200, 1.1 / 200)
        tv = tv_distance_to_poisson(pmf, 1.1)
        assert tv < 0.01
        assert tv == pytest.approx(0.00151021609277, abs=1e-9)


class TestSummarize:
    def test_fields_consistent(self):
        ne = [0, 0, 1, 0, 2, 0]
        s = summarize_trials(0, ne, p=10, lambda_p=0.5)
        assert s.p_correct_hat == s.pmf[0]
        assert abs(sum(s.pmf.values()) - 1.0) <= 1e-12
        assert s.mean_ne == pytest.approx(0.5)
        assert s.ber_mean == pytest.approx(0.05)
        assert 0.0 <= s.tv_to_poisson <= 1.0
        assert math.isnan(s.pairwise_error_corr)

    def test_degenerate_bits_give_nan_corr(self):
        bits = np.zeros((40, 5), dtype=bool)
        s = summarize_trials(0, [0] * 40, p=5, lambda_p=0.1, bit_error_matrix=bits)
        assert math.isnan(s.pairwise_error_corr)
