"""Estimator tests: closed-form identities, planted-panel recovery."""

import math

import numpy as np
import pytest

from cevkmv.cev_engine import CevParams, Model, cev_dd, cev_default_probability
from cevkmv.errors import CalibrationDiverged, NoWithinVariation
from cevkmv.estimation import (
    AssetPanel,
    FitMethod,
    PanelEntry,
    dd_panel,
    fit_equivalent_vol,
    fit_fixed_effects,
    fit_pinned_beta,
)
from cevkmv.estimation import _ev_objective, _sorted_arrays, _ev_design
from cevkmv.market_model import Group, bsm_d2
from cevkmv.mc_oracle import GroupSpec, simulate_panel
from cevkmv.normal import norm_cdf


def panel_from_arrays(firms, quarters, v, s, d=80.0, r=0.03, t=1.0):
    entries = []
    for i, f in enumerate(firms):
        for j, q in enumerate(quarters):
            entries.append(PanelEntry(f, q, v[i][j], s[i][j], d, r, t))
    return AssetPanel(tuple(entries))


class TestFixedEffects:
    def test_identity_relation_gives_beta_two(self):
        # ln sigma = ln V exactly, so the slope is 1 and beta-1 = 1
        v = [[0.5, 0.8, 1.3], [0.9, 1.7, 2.5]]
        panel = panel_from_arrays(["A", "B"], ["Q1", "Q2", "Q3"], v, v)
        fit = fit_fixed_effects(panel)
        assert fit.beta == pytest.approx(2.0, abs=1e-12)
        assert fit.deltas["A"] == pytest.approx(1.0, abs=1e-12)
        assert fit.deltas["B"] == pytest.approx(1.0, abs=1e-12)
        assert fit.sse == pytest.approx(0.0, abs=1e-20)

    def test_constant_vol_per_firm_gives_gbm(self):
        v = [[100.0, 140.0, 90.0], [50.0, 55.0, 70.0]]
        s = [[0.25] * 3, [0.4] * 3]
        fit = fit_fixed_effects(panel_from_arrays(["A", "B"], ["Q1", "Q2", "Q3"], v, s))
        assert fit.beta == pytest.approx(1.0, abs=1e-14)
        assert fit.deltas["A"] == pytest.approx(0.25, rel=1e-14)
        assert fit.deltas["B"] == pytest.approx(0.4, rel=1e-14)

    def test_matches_two_pass_transcription(self):
        rng = np.random.default_rng(42)
        firms = [f"F{i}" for i in range(12)]
        quarters = [f"Q{j}" for j in range(6)]
        v = np.exp(rng.normal(4, 1, (12, 6)))
        s = np.exp(rng.normal(-1, 0.3, (12, 6)))
        fit = fit_fixed_effects(panel_from_arrays(firms, quarters, v, s))
        # independent two-pass computation: demean, then pooled slope
        lv, ls = np.log(v), np.log(s)
        dv = lv - lv.mean(axis=1, keepdims=True)
        ds = ls - ls.mean(axis=1, keepdims=True)
        beta = 1.0 + (dv * ds).sum() / (dv * dv).sum()
        assert fit.beta == pytest.approx(beta, abs=1e-12)
        for i, f in enumerate(firms):
            ld = ls[i].mean() - (beta - 1.0) * lv[i].mean()
            assert math.log(fit.deltas[f]) == pytest.approx(ld, abs=1e-12)
        # OLS normal equation: residuals orthogonal to the demeaned regressor
        resid = ds - (beta - 1.0) * dv
        assert abs((resid * dv).sum()) < 1e-10

    def test_recovers_planted_beta_with_noise(self):
        spec = GroupSpec(beta=1.185)
        panel = simulate_panel(spec, 186, 9, noise_sd=0.05, seed=3)
        fit = fit_fixed_effects(panel)
        assert abs(fit.beta - 1.185) < 0.02

    def test_scale_equivariance(self):
        rng = np.random.default_rng(7)
        v = np.exp(rng.normal(4, 1, (5, 4)))
        s = np.exp(rng.normal(-1, 0.2, (5, 4)))
        firms = list("ABCDE")
        quarters = ["Q1", "Q2", "Q3", "Q4"]
        fit = fit_fixed_effects(panel_from_arrays(firms, quarters, v, s))
        c = 1e6
        fit_scaled = fit_fixed_effects(panel_from_arrays(firms, quarters, v * c, s))
        assert fit_scaled.beta == pytest.approx(fit.beta, abs=1e-10)
        for f in firms:
            want = math.log(fit.deltas[f]) - (fit.beta - 1.0) * math.log(c)
            assert math.log(fit_scaled.deltas[f]) == pytest.approx(want, rel=1e-9)

    def test_no_within_variation_raises(self):
        v = [[100.0, 100.0], [70.0, 70.0]]
        s = [[0.3, 0.35], [0.4, 0.42]]
        with pytest.raises(NoWithinVariation):
            fit_fixed_effects(panel_from_arrays(["A", "B"], ["Q1", "Q2"], v, s))

    def test_requires_two_quarters_per_firm(self):
        entries = (PanelEntry("A", "Q1", 100.0, 0.3, 80.0, 0.03, 1.0),)
        with pytest.raises(ValueError):
            fit_fixed_effects(AssetPanel(entries))

    def test_deterministic(self):
        panel = simulate_panel(GroupSpec(beta=0.9), 30, 5, 0.05, seed=1)
        assert fit_fixed_effects(panel) == fit_fixed_effects(panel)


class TestEquivalentVol:
    def test_gbm_panel_recovered_exactly(self):
        # unit asset scale: the delta error is |beta_hat - 1| times ln V,
        # so keeping ln V near zero exposes the solver tolerance itself
        spec = GroupSpec(beta=1.0, asset_scale=1.0, asset_spread=0.4)
        panel = simulate_panel(spec, 25, 6, noise_sd=0.0, seed=5, vol_model="equivalent")
        fit = fit_equivalent_vol(panel)
        assert abs(fit.beta - 1.0) <= 2e-4
        for e in panel.entries:
            assert fit.deltas[e.firm_id] == pytest.approx(e.asset_vol, rel=5e-4)

    def test_gbm_panel_at_production_scale(self):
        spec = GroupSpec(beta=1.0)
        panel = simulate_panel(spec, 25, 6, noise_sd=0.0, seed=5, vol_model="equivalent")
        fit = fit_equivalent_vol(panel)
        assert abs(fit.beta - 1.0) <= 2e-4
        for e in panel.entries:
            # |beta_hat - 1| ~ 1e-4 amplified by ln V ~ 22
            assert fit.deltas[e.firm_id] == pytest.approx(e.asset_vol, rel=1e-2)

    @pytest.mark.parametrize("beta", [0.9841, 1.1413])
    def test_round_trip_through_expansion(self, beta):
        spec = GroupSpec(beta=beta)
        panel = simulate_panel(spec, 60, 9, noise_sd=0.0, seed=8, vol_model="equivalent")
        fit = fit_equivalent_vol(panel)
        assert abs(fit.beta - beta) < 0.01

    def test_methods_agree_on_exact_loglinear_data(self):
        # r = 0 and at-the-money debt make the expansion collapse onto the
        # local-volatility law, so both estimators see the same model
        rng = np.random.default_rng(31)
        beta = 1.2
        entries = []
        for i in range(40):
            delta_i = 0.25 * math.exp(rng.normal(0, 0.1))
            lv = rng.normal(0.0, 0.4) + np.cumsum(rng.normal(0, 0.2, 6))
            for j, x in enumerate(np.exp(lv)):
                vol = delta_i * x ** (beta - 1.0)
                entries.append(PanelEntry(f"F{i:02d}", f"Q{j}", float(x), float(vol),
                                          float(x), 0.0, 1.0))
        panel = AssetPanel(tuple(entries))
        fe = fit_fixed_effects(panel)
        ev = fit_equivalent_vol(panel)
        assert fe.beta == pytest.approx(beta, abs=1e-12)
        assert ev.beta == pytest.approx(fe.beta, abs=1e-3)

    def test_boundary_minimum_raises(self):
        # data wants beta ~ 0.5, below the search interval
        spec = GroupSpec(beta=0.5)
        panel = simulate_panel(spec, 20, 6, noise_sd=0.0, seed=9, vol_model="equivalent")
        with pytest.raises(CalibrationDiverged):
            fit_equivalent_vol(panel, beta_range=(0.8, 2.0))

    def test_rejects_interval_without_one(self):
        panel = simulate_panel(GroupSpec(beta=1.0), 10, 4, 0.0, seed=2)
        with pytest.raises(ValueError):
            fit_equivalent_vol(panel, beta_range=(1.2, 2.0))

    def test_objective_trace_monotone_and_local_minimum(self):
        panel = simulate_panel(GroupSpec(beta=1.1), 30, 6, noise_sd=0.03, seed=12,
                               vol_model="equivalent")
        trace = []
        fit = fit_equivalent_vol(panel, trace=trace)
        best = [b for _, b in trace]
        assert all(b1 >= b2 for b1, b2 in zip(best, best[1:]))
        # the returned beta is a local minimizer at the outer tolerance
        entries, firms, idx, _, ln_s = _sorted_arrays(panel)
        fwd, f_mid, t = _ev_design(entries)
        counts = np.bincount(idx, minlength=len(firms))
        ln_d0 = np.bincount(idx, weights=ln_s, minlength=len(firms)) / counts

        def obj(b):
            return _ev_objective(b, ln_s, idx, len(firms), fwd, f_mid, t, 1e-8, ln_d0)[0]

        assert obj(fit.beta - 1e-4) >= fit.sse - 1e-12
        assert obj(fit.beta + 1e-4) >= fit.sse - 1e-12

    def test_deterministic(self):
        panel = simulate_panel(GroupSpec(beta=1.1), 20, 5, 0.02, seed=4, vol_model="equivalent")
        assert fit_equivalent_vol(panel) == fit_equivalent_vol(panel)


class TestDdPanel:
    def test_gbm_fit_reproduces_classical_distances(self):
        panel = simulate_panel(GroupSpec(beta=1.0, walk_sd=0.1), 8, 3, 0.0, seed=6)
        fit = fit_fixed_effects(panel)
        records = dd_panel(panel, fit)
        assert len(records) == len(panel.entries)
        for rec, e in zip(records, panel.entries):
            d2 = bsm_d2(e.asset_value, e.default_point, e.rate,
                        fit.deltas[e.firm_id] * e.asset_value ** (fit.beta - 1.0),
                        e.horizon)
            assert rec.distance == pytest.approx(d2, abs=2e-3)
            assert rec.model is Model.CEV_FE
            assert rec.probability == pytest.approx(norm_cdf(-d2), abs=1e-4)

    def test_single_entry_matches_direct_engine_call(self):
        e = PanelEntry("A", "Q1", 150.0, 0.25, 80.0, 0.03, 1.0)
        panel = AssetPanel((e,))
        fit = fit_pinned_beta(panel, 0.85, FitMethod.EQUIVALENT_VOL)
        (rec,) = dd_panel(panel, fit)
        p = cev_default_probability(150.0, CevParams(fit.deltas["A"], 0.85),
                                    80.0, 0.03, 1.0)
        assert rec.probability == p
        assert rec.distance == cev_dd(p)
        assert rec.model is Model.CEV_EV

    def test_fit_must_cover_all_firms(self):
        panel = simulate_panel(GroupSpec(), 4, 3, 0.0, seed=10)
        fit = fit_fixed_effects(panel)
        deltas = dict(fit.deltas)
        deltas.pop(sorted(deltas)[0])
        broken = type(fit)(fit.beta, deltas, fit.method, fit.sse, fit.n_obs)
        with pytest.raises(ValueError):
            dd_panel(panel, broken)

    def test_zero_debt_entries_bypass_the_solver(self):
        e1 = PanelEntry("A", "Q1", 150.0, 0.25, 0.0, 0.03, 1.0)
        e2 = PanelEntry("A", "Q2", 160.0, 0.25, 80.0, 0.03, 1.0)
        panel = AssetPanel((e1, e2))
        fit = fit_pinned_beta(panel, 1.0)
        records = dd_panel(panel, fit)
        assert records[0].probability == 0.0
        assert records[0].distance == math.inf
        assert 0.0 < records[1].probability < 1.0


class TestPinnedBeta:
    def test_single_quarter_firm_allowed(self):
        e = PanelEntry("A", "Q1", 150.0, 0.25, 80.0, 0.03, 1.0)
        fit = fit_pinned_beta(AssetPanel((e,)), 1.0)
        assert fit.deltas["A"] == pytest.approx(0.25, rel=1e-14)
        assert fit.beta == 1.0

    def test_intercepts_match_fixed_effects_at_fitted_slope(self):
        panel = simulate_panel(GroupSpec(beta=1.1), 10, 5, 0.02, seed=11)
        fe = fit_fixed_effects(panel)
        pinned = fit_pinned_beta(panel, fe.beta)
        for f, d in fe.deltas.items():
            assert pinned.deltas[f] == pytest.approx(d, rel=1e-12)
