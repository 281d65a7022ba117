"""Statistics tests: gamma MLE, mean-comparison test, rank-sum test."""

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import digamma as scipy_digamma
from scipy.special import polygamma

from cevkmv.errors import DegenerateSample
from cevkmv.normal import norm_cdf
from cevkmv.stats_tests import (
    GammaFit,
    digamma,
    gamma_loglik,
    gamma_mle,
    make_test_report,
    midranks,
    trigamma,
    z1_test,
    z2_wilcoxon,
)


class TestPolygamma:
    def test_digamma_matches_scipy(self):
        xs = np.concatenate([np.linspace(0.05, 5, 60), np.linspace(5, 300, 60)])
        for x in xs:
            assert digamma(float(x)) == pytest.approx(scipy_digamma(x), abs=1e-10)

    def test_trigamma_matches_scipy(self):
        xs = np.concatenate([np.linspace(0.05, 5, 60), np.linspace(5, 300, 60)])
        for x in xs:
            assert trigamma(float(x)) == pytest.approx(float(polygamma(1, x)), abs=1e-10)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            digamma(0.0)
        with pytest.raises(ValueError):
            trigamma(-1.0)


class TestGammaMle:
    def test_fitted_mean_equals_sample_mean(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.gamma(rng.uniform(0.5, 8), rng.uniform(0.5, 3), size=50)
            fit = gamma_mle(x)
            assert fit.alpha / fit.beta == pytest.approx(float(np.mean(x)), rel=1e-12)

    def test_exponential_data_recovers_unit_shape(self):
        rng = np.random.default_rng(3)
        x = rng.exponential(2.0, size=10_000)
        fit = gamma_mle(x)
        assert abs(fit.alpha - 1.0) < 0.05

    def test_table_scale_parameters_within_asymptotic_ci(self):
        # shape 4.183, rate 1.075, n = 186: the 99% CI half-width comes
        # from the inverse Fisher information for the profile shape
        alpha, beta, n = 4.183, 1.075, 186
        rng = np.random.default_rng(20190401)
        x = rng.gamma(alpha, 1.0 / beta, size=n)
        fit = gamma_mle(x)
        se = math.sqrt(alpha / (n * (alpha * trigamma(alpha) - 1.0)))
        assert abs(fit.alpha - alpha) < 2.576 * se

    def test_matches_scipy_mle(self):
        from scipy.stats import gamma as scipy_gamma
        rng = np.random.default_rng(7)
        x = rng.gamma(2.5, 1.7, size=400)
        fit = gamma_mle(x)
        a, _, scale = scipy_gamma.fit(x, floc=0)
        assert fit.alpha == pytest.approx(a, rel=1e-6)
        assert fit.beta == pytest.approx(1.0 / scale, rel=1e-6)

    def test_degenerate_sample_raises(self):
        with pytest.raises(DegenerateSample):
            gamma_mle([2.0, 2.0, 2.0])

    def test_input_validation(self):
        with pytest.raises(ValueError):
            gamma_mle([1.0])
        with pytest.raises(ValueError):
            gamma_mle([1.0, -2.0])
        with pytest.raises(ValueError):
            gamma_mle([1.0, math.nan])

    @settings(max_examples=60, derandomize=True)
    @given(seed=st.integers(0, 10_000), n=st.integers(5, 80))
    def test_mle_beats_method_of_moments(self, seed, n):
        rng = np.random.default_rng(seed)
        x = rng.gamma(rng.uniform(0.4, 6), rng.uniform(0.3, 4), size=n)
        fit = gamma_mle(x)
        mean, var = float(np.mean(x)), float(np.var(x, ddof=1))
        mom_alpha = mean * mean / var
        mom_beta = mean / var
        assert fit.loglik >= gamma_loglik(mom_alpha, mom_beta, x) - 1e-9


class TestZ1:
    def test_reported_pairs(self):
        assert round(norm_cdf(0.045), 3) == 0.518
        assert round(norm_cdf(-1.294), 3) == 0.098

    def test_identical_samples_are_null(self):
        rng = np.random.default_rng(5)
        x = rng.gamma(4, 1, 100)
        z, p = z1_test(x, x)
        assert z == pytest.approx(0.0, abs=1e-14)
        assert p == pytest.approx(0.5, abs=1e-14)

    def test_antisymmetry(self):
        rng = np.random.default_rng(6)
        x = rng.gamma(4, 1, 80)
        y = rng.gamma(5, 0.9, 120)
        zxy, _ = z1_test(x, y)
        zyx, _ = z1_test(y, x)
        assert zxy == pytest.approx(-zyx, rel=1e-12)

    def test_against_direct_transcription(self):
        from scipy.stats import gamma as scipy_gamma
        rng = np.random.default_rng(8)
        x = rng.gamma(4.0, 1.0, 150)
        y = rng.gamma(6.0, 0.7, 170)
        z, p = z1_test(x, y)
        a1, _, sc1 = scipy_gamma.fit(x, floc=0)
        a2, _, sc2 = scipy_gamma.fit(y, floc=0)
        b1, b2 = 1.0 / sc1, 1.0 / sc2
        z_direct = (x.mean() - y.mean()) / math.sqrt(
            a1 / (x.size * b1**2) + a2 / (y.size * b2**2))
        assert z == pytest.approx(z_direct, rel=1e-5)
        assert p == pytest.approx(norm_cdf(z_direct), rel=1e-5)

    def test_degenerate_propagates(self):
        with pytest.raises(DegenerateSample):
            z1_test([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestZ2:
    def test_hand_enumerated_example(self):
        z, p = z2_wilcoxon([1.0, 2.0], [3.0, 4.0])
        assert z == pytest.approx((3.0 - 5.0) / math.sqrt(20.0 / 12.0), rel=1e-12)
        assert z == pytest.approx(-1.549, abs=1e-3)
        assert p == norm_cdf(z)

    def test_swap_negates(self):
        rng = np.random.default_rng(9)
        x = rng.normal(0, 1, 15)
        y = rng.normal(0.3, 1, 20)
        zxy, _ = z2_wilcoxon(x, y)
        zyx, _ = z2_wilcoxon(y, x)
        assert zxy == pytest.approx(-zyx, rel=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(10)
        x = rng.gamma(4, 1, 25)
        y = rng.gamma(5, 1, 30)
        z1_, p1_ = z2_wilcoxon(x, y)
        z2_, p2_ = z2_wilcoxon(np.log(x), np.log(y))
        z3_, p3_ = z2_wilcoxon(np.exp(x / 10), np.exp(y / 10))
        assert z1_ == z2_ == z3_
        assert p1_ == p2_ == p3_

    def test_midranks_with_ties(self):
        r = midranks([3.0, 1.0, 3.0, 2.0])
        assert list(r) == [3.5, 1.0, 3.5, 2.0]

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            z2_wilcoxon([], [1.0])

    def test_normal_p_tracks_exact_permutation_mid_p(self):
        # exhaustive over every achievable rank assignment for all
        # two-sample sizes with 3..8 observations; the uncorrected
        # normal statistic approximates the mid-p permutation value
        worst = 0.0
        for total in range(3, 9):
            for m in range(1, total):
                n = total - m
                values = np.arange(1.0, total + 1.0)
                all_w = np.array([sum(c) for c in combinations(range(1, total + 1), m)])
                for c in combinations(range(total), m):
                    x = values[list(c)]
                    y = np.delete(values, list(c))
                    z, p = z2_wilcoxon(x, y)
                    w = sum(values[list(c)])
                    exact_mid = (np.count_nonzero(all_w < w)
                                 + 0.5 * np.count_nonzero(all_w == w)) / all_w.size
                    worst = max(worst, abs(p - exact_mid))
        assert worst < 0.08

    def test_two_singletons_exceed_the_mid_p_envelope(self):
        # the m = n = 1 design is the one size where the normal
        # approximation misses the mid-p by more than 0.08
        z, p = z2_wilcoxon([1.0], [2.0])
        assert abs(p - 0.25) == pytest.approx(0.0913, abs=1e-4)


class TestReportBuilder:
    def test_report_fields_consistent(self):
        rng = np.random.default_rng(12)
        st_dd = rng.gamma(4.2, 1.0, 90)
        nst_dd = rng.gamma(6.7, 0.7, 110)
        rep = make_test_report("2019Q1", st_dd, nst_dd)
        assert rep.m == 90 and rep.n == 110
        assert rep.p1 == norm_cdf(rep.z1)
        assert rep.p2 == norm_cdf(rep.z2)
        assert isinstance(rep.st_fit, GammaFit)
        assert rep.st_fit.mean == pytest.approx(float(np.mean(st_dd)), rel=1e-12)
