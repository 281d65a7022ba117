"""KMV market-model unit and property tests.

Expected values tagged as oracle-derived were produced by independent
routes: numerical integration of the lognormal terminal payoff for the
call price, and central finite differences of the call for the equity
volatility relation.
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cevkmv.errors import NoConvergence
from cevkmv.market_model import (
    AssetSolution,
    FirmQuarterObservation,
    bsm_call,
    bsm_d2,
    classical_dd,
    classical_default_probability,
    forward_equity,
    invert_kmv,
    kmv_equity_vol,
)
from cevkmv.normal import norm_cdf


def make_obs(equity_value, equity_vol, default_point, rate=0.03, horizon=1.0,
             firm="F1", quarter="2019Q1"):
    return FirmQuarterObservation(firm, quarter, equity_value, equity_vol,
                                  default_point, rate, horizon)


class TestBsmCall:
    def test_zero_strike_equals_underlying(self):
        assert bsm_call(100.0, 0.0, 0.03, 0.4, 1.0) == pytest.approx(100.0, abs=1e-12)

    def test_zero_vol_is_discounted_forward(self):
        want = 100.0 - 80.0 * math.exp(-0.03)
        assert bsm_call(100.0, 80.0, 0.03, 0.0, 1.0) == pytest.approx(want, abs=1e-12)

    def test_against_lognormal_quadrature_oracle(self):
        # scipy.integrate.quad of the discounted terminal payoff against the
        # lognormal density, frozen (quad abs err ~7e-10)
        assert bsm_call(100.0, 80.0, 0.03, 0.4, 1.0) == pytest.approx(
            27.936545489317545, abs=1e-7)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            bsm_call(-1.0, 80.0, 0.03, 0.4, 1.0)
        with pytest.raises(ValueError):
            bsm_call(100.0, -80.0, 0.03, 0.4, 1.0)
        with pytest.raises(ValueError):
            bsm_call(100.0, 80.0, math.nan, 0.4, 1.0)
        with pytest.raises(ValueError):
            bsm_call(100.0, 80.0, 0.03, -0.4, 1.0)
        with pytest.raises(ValueError):
            bsm_call(100.0, 80.0, 0.03, 0.4, 0.0)


class TestKmvEquityVol:
    def test_unit_leverage_full_delta(self):
        assert kmv_equity_vol(100.0, 100.0, 0.3, 40.0) == pytest.approx(0.3, abs=1e-12)

    def test_zero_asset_vol(self):
        assert kmv_equity_vol(120.0, 55.0, 0.0, 1.3) == 0.0

    def test_rejects_nonpositive_equity(self):
        with pytest.raises(ValueError):
            kmv_equity_vol(100.0, 0.0, 0.3, 1.0)

    def test_against_finite_difference_oracle(self):
        v, d, r, s, t = 100.0, 80.0, 0.03, 0.4, 1.0
        ve = bsm_call(v, d, r, s, t)
        h = 1e-4 * v
        dve_dv = (bsm_call(v + h, d, r, s, t) - bsm_call(v - h, d, r, s, t)) / (2 * h)
        oracle = s * v / ve * dve_dv
        d1 = bsm_d2(v, d, r, s, t) + s * math.sqrt(t)
        assert kmv_equity_vol(v, ve, s, d1) == pytest.approx(oracle, rel=1e-7)


class TestInvertKmv:
    def test_round_trip_recovers_asset_inputs(self):
        va, sa, d, r, t = 150.0, 0.25, 80.0, 0.03, 1.0
        ve, se = forward_equity(va, sa, d, r, t)
        sol = invert_kmv(make_obs(ve, se, d, r, t))
        assert sol.asset_value == pytest.approx(va, rel=1e-8)
        assert sol.asset_vol == pytest.approx(sa, rel=1e-8)
        assert sol.residual_norm <= 1e-10
        assert not sol.degenerate

    def test_zero_debt_is_identity_and_flagged(self):
        sol = invert_kmv(make_obs(42.0, 0.37, 0.0))
        assert sol == AssetSolution(42.0, 0.37, 0.0, 0, degenerate=True)

    def test_table_scale_inputs_converge(self):
        # equity ~3.8bn, sigma_E ~0.48, default point ~4.9bn
        sol = invert_kmv(make_obs(3.819e9, 0.480, 4.899e9))
        assert sol.asset_value > 3.819e9
        assert sol.residual_norm <= 1e-10
        ve, se = forward_equity(sol.asset_value, sol.asset_vol, 4.899e9, 0.03, 1.0)
        assert ve == pytest.approx(3.819e9, rel=1e-10)
        assert se == pytest.approx(0.480, rel=1e-10)

    def test_deterministic(self):
        obs = make_obs(3.819e9, 0.480, 4.899e9)
        a = invert_kmv(obs)
        b = invert_kmv(obs)
        assert a == b

    def test_iteration_cap_raises(self):
        with pytest.raises(NoConvergence):
            invert_kmv(make_obs(3.819e9, 0.480, 4.899e9), max_iter=1)


class TestClassicalDd:
    def test_vanishing_numerator(self):
        s, r, t, d = 0.3, 0.02, 1.0, 80.0
        va = d * math.exp(-(r - 0.5 * s * s) * t)
        sol = AssetSolution(va, s, 0.0, 0)
        obs = make_obs(1.0, 0.5, d, r, t)
        assert classical_dd(sol, obs) == pytest.approx(0.0, abs=1e-12)

    def test_zero_debt_infinite_distance(self):
        obs = make_obs(42.0, 0.37, 0.0)
        sol = invert_kmv(obs)
        assert classical_dd(sol, obs) == math.inf
        assert classical_default_probability(sol, obs) == 0.0

    def test_population_mean_matches_planted_gamma(self):
        # distances drawn from a gamma law with shape 4.183 and scale 1.075
        # (mean 4.497) survive the forward map + inversion + d2 pipeline
        rng = np.random.default_rng(20190301)
        n = 2000
        dd = rng.gamma(shape=4.183, scale=1.075, size=n)
        r, t, s = 0.03, 1.0, 0.35
        va = 5e9
        means = []
        for d2_target in dd[:200]:
            d = va * math.exp(-(d2_target * s * math.sqrt(t) - (r - 0.5 * s * s) * t))
            ve, se = forward_equity(va, s, d, r, t)
            sol = invert_kmv(make_obs(ve, se, d, r, t))
            means.append(classical_dd(sol, make_obs(ve, se, d, r, t)))
        # recovered distances equal the planted draws
        assert np.allclose(means, dd[:200], rtol=1e-7)
        # planted population mean sits at shape*scale ~ 4.498
        assert 4.183 * 1.075 == pytest.approx(4.498, abs=2e-3)
        assert np.mean(dd) == pytest.approx(4.183 * 1.075, abs=3 * 4.498 / math.sqrt(4.183) / math.sqrt(n))


positive_assets = st.floats(min_value=1e6, max_value=3e11)
vols = st.floats(min_value=0.1, max_value=0.9)
leverages = st.floats(min_value=0.08, max_value=1.2)
rates = st.floats(min_value=0.0, max_value=0.08)
horizons = st.floats(min_value=0.3, max_value=2.0)


class TestProperties:
    @settings(max_examples=200, derandomize=True)
    @given(va=positive_assets, sa=vols, lev=leverages, r=rates, t=horizons)
    def test_round_trip_property(self, va, sa, lev, r, t):
        d = lev * va
        ve, se = forward_equity(va, sa, d, r, t)
        assume(ve > 1e-9 * va and se > 1e-6)
        sol = invert_kmv(make_obs(ve, se, d, r, t))
        assert sol.asset_value == pytest.approx(va, rel=1e-8)
        assert sol.asset_vol == pytest.approx(sa, rel=1e-8)

    @settings(max_examples=100, derandomize=True)
    @given(va=positive_assets, sa=vols, lev=leverages, r=rates, t=horizons)
    def test_call_bounds(self, va, sa, lev, r, t):
        d = lev * va
        c = bsm_call(va, d, r, sa, t)
        assert max(va - d * math.exp(-r * t), 0.0) - 1e-9 * va <= c <= va * (1 + 1e-12)

    @settings(max_examples=100, derandomize=True)
    @given(va=positive_assets, sa=vols, lev=leverages, r=rates, t=horizons)
    def test_call_monotone_in_value_and_vol(self, va, sa, lev, r, t):
        d = lev * va
        c = bsm_call(va, d, r, sa, t)
        assert bsm_call(va * 1.01, d, r, sa, t) > c
        # strict vol monotonicity holds whenever the time value is
        # representable; deep in the money the vega underflows doubles
        time_value = c - max(va - d * math.exp(-r * t), 0.0)
        assume(time_value > 1e-9 * va)
        assert bsm_call(va, d, r, sa * 1.05, t) > c

    @settings(max_examples=100, derandomize=True)
    @given(va=positive_assets, sa=vols, lev=leverages, r=rates, t=horizons)
    def test_dd_monotone_and_probability_open(self, va, sa, lev, r, t):
        d = lev * va
        obs = make_obs(1.0, 0.5, d, r, t)
        sol = AssetSolution(va, sa, 0.0, 0)
        dd = classical_dd(sol, obs)
        up = classical_dd(AssetSolution(va * 1.02, sa, 0.0, 0), obs)
        more_debt = classical_dd(sol, make_obs(1.0, 0.5, d * 1.02, r, t))
        assert up > dd
        assert more_debt < dd
        assume(abs(dd) < 37)  # beyond this N(-dd) underflows double precision
        assert 0.0 < norm_cdf(-dd) < 1.0
