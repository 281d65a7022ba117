"""Group-level CEV parameter estimation from firm panels.

Both estimators take a panel of GBM-inverted (asset value, asset
volatility) pairs and produce one elasticity ``beta`` for the group
plus one volatility scale ``delta_i`` per firm.

* ``fit_fixed_effects`` regresses ln sigma on ln V with firm
  intercepts: the within (demeaned) OLS slope identifies beta - 1 in
  closed form, and each intercept recovers ln delta_i.
* ``fit_equivalent_vol`` treats the inverted volatilities as equivalent
  Black-Scholes volatilities and least-squares-fits the Hagan-Woodward
  expansion in log space: a golden-section search over beta wraps exact
  per-firm 1-D solves for ln delta_i (Gauss-Newton; the objective is
  almost linear in ln delta_i, so a handful of steps reaches 1e-10).
  Fitting in log-vol space stabilizes heteroskedasticity across firm
  sizes.

Fits are deterministic given the panel and settings. The per-firm inner
solves are independent; the outer beta search is sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cev_engine import (
    CevParams,
    DefaultDistanceRecord,
    Model,
    PdeGrid,
    cev_dd,
    cev_default_probability,
)
from .errors import CalibrationDiverged, NoWithinVariation
from .market_model import Group

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FitMethod(str, Enum):
    FIXED_EFFECTS = "FixedEffects"
    EQUIVALENT_VOL = "EquivalentVol"


@dataclass(frozen=True)
class PanelEntry:
    firm_id: str
    quarter: str
    asset_value: float
    asset_vol: float
    default_point: float
    rate: float
    horizon: float


@dataclass(frozen=True)
class AssetPanel:
    """Inverted asset observations for one group of firms."""

    entries: tuple[PanelEntry, ...]
    group: Group = Group.ST

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ValueError("panel is empty")
        for e in self.entries:
            if not (e.asset_value > 0 and e.asset_vol > 0):
                raise ValueError(f"non-positive asset data for {e.firm_id} {e.quarter}")
            if not (e.default_point >= 0 and e.horizon > 0 and math.isfinite(e.rate)):
                raise ValueError(f"bad entry for {e.firm_id} {e.quarter}")

    def firms(self) -> list[str]:
        return sorted({e.firm_id for e in self.entries})

    def require_repeated_quarters(self):
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.firm_id] = counts.get(e.firm_id, 0) + 1
        thin = sorted(f for f, c in counts.items() if c < 2)
        if thin:
            raise ValueError(f"firms with fewer than two quarters: {thin[:5]}")

    def subset(self, quarters) -> "AssetPanel":
        keep = tuple(e for e in self.entries if e.quarter in set(quarters))
        return AssetPanel(keep, self.group)


@dataclass(frozen=True)
class CevGroupFit:
    """One group-level fit: shared beta, per-firm deltas, diagnostics."""

    beta: float
    deltas: dict[str, float]
    method: FitMethod
    sse: float
    n_obs: int

    def params_for(self, firm_id: str) -> CevParams:
        return CevParams(self.deltas[firm_id], self.beta)


def _sorted_arrays(panel: AssetPanel):
    entries = sorted(panel.entries, key=lambda e: (e.firm_id, e.quarter))
    firms = sorted({e.firm_id for e in entries})
    index = {f: i for i, f in enumerate(firms)}
    idx = np.array([index[e.firm_id] for e in entries])
    ln_v = np.log([e.asset_value for e in entries])
    ln_s = np.log([e.asset_vol for e in entries])
    return entries, firms, idx, ln_v, ln_s


def fit_fixed_effects(panel: AssetPanel) -> CevGroupFit:
    """Within-OLS estimate of (beta, ln delta_i) on the log-linear law.

    Firms without within variation in ln V carry zero weight in the
    slope but still receive their intercept. Raises NoWithinVariation
    when no firm moves at all.
    """
    panel.require_repeated_quarters()
    entries, firms, idx, ln_v, ln_s = _sorted_arrays(panel)
    n_firms = len(firms)
    counts = np.bincount(idx, minlength=n_firms)
    mean_v = np.bincount(idx, weights=ln_v, minlength=n_firms) / counts
    mean_s = np.bincount(idx, weights=ln_s, minlength=n_firms) / counts
    dv = ln_v - mean_v[idx]
    ds = ln_s - mean_s[idx]
    den = float(np.sum(dv * dv))
    if den == 0.0:
        raise NoWithinVariation("no within-firm variation in ln asset value")
    beta = 1.0 + float(np.sum(dv * ds)) / den
    ln_delta = mean_s - (beta - 1.0) * mean_v
    resid = ds - (beta - 1.0) * dv
    sse = float(np.sum(resid * resid))
    deltas = {f: float(np.exp(ln_delta[i])) for i, f in enumerate(firms)}
    return CevGroupFit(beta, deltas, FitMethod.FIXED_EFFECTS, sse, len(entries))


def fit_pinned_beta(panel: AssetPanel, beta: float,
                    method: FitMethod = FitMethod.FIXED_EFFECTS) -> CevGroupFit:
    """Per-firm intercepts at an externally fixed elasticity.

    ln delta_i is the firm mean of ln sigma - (beta - 1) ln V, the
    intercept formula with the slope pinned; usable even for single
    observations per firm.
    """
    entries, firms, idx, ln_v, ln_s = _sorted_arrays(panel)
    counts = np.bincount(idx, minlength=len(firms))
    z = ln_s - (beta - 1.0) * ln_v
    ln_delta = np.bincount(idx, weights=z, minlength=len(firms)) / counts
    resid = z - ln_delta[idx]
    deltas = {f: float(np.exp(ln_delta[i])) for i, f in enumerate(firms)}
    return CevGroupFit(float(beta), deltas, method, float(np.sum(resid * resid)), len(entries))


def _ev_design(entries):
    v = np.array([e.asset_value for e in entries])
    d = np.array([e.default_point for e in entries])
    r = np.array([e.rate for e in entries])
    t = np.array([e.horizon for e in entries])
    fwd = v * np.exp(r * t)
    f_mid = 0.5 * (fwd + d)
    return fwd, f_mid, t


def _ev_objective(beta, y, idx, n_firms, fwd, f_mid, t, inner_tol, ln_d0):
    """Profile objective over beta: exact inner solve for each ln delta.

    Model in log space: y = ln delta + (beta - 1) ln f + ln(1 + c1 +
    c2 delta^2) with c1 the skew and c2 the vol correction of the
    expansion. Gauss-Newton on ln delta_i, all firms at once.
    """
    one_b = 1.0 - beta
    base = -one_b * np.log(f_mid)
    # strike K = 2 f - F, so (F - K) = 2 (F - f)
    c1 = one_b * (2.0 + beta) * (2.0 * (fwd - f_mid)) ** 2 / (24.0 * f_mid * f_mid)
    c2 = one_b * one_b * t / (24.0 * f_mid ** (2.0 - 2.0 * beta))
    counts = np.bincount(idx, minlength=n_firms)
    ln_d = ln_d0.copy()
    for _ in range(100):
        delta2 = np.exp(2.0 * ln_d[idx])
        b_term = 1.0 + c1 + c2 * delta2
        resid = y - ln_d[idx] - base - np.log(b_term)
        w = 1.0 + 2.0 * c2 * delta2 / b_term
        num = np.bincount(idx, weights=resid * w, minlength=n_firms)
        den = np.bincount(idx, weights=w * w, minlength=n_firms)
        step = num / den
        ln_d = ln_d + step
        if float(np.max(np.abs(step))) < inner_tol * 1e-2:
            break
    delta2 = np.exp(2.0 * ln_d[idx])
    resid = y - ln_d[idx] - base - np.log(1.0 + c1 + c2 * delta2)
    return float(np.sum(resid * resid)), ln_d


def fit_equivalent_vol(panel: AssetPanel, beta_range: tuple[float, float] = (0.2, 2.0),
                       outer_tol: float = 1e-4, inner_tol: float = 1e-8,
                       trace: list | None = None) -> CevGroupFit:
    """Calibrate (beta, delta_i) to the equivalent-volatility expansion.

    Minimizes the summed squared log-vol residuals; golden-section on
    beta over ``beta_range``, exact per-firm inner solves. Raises
    CalibrationDiverged when the minimizer sits at either end of the
    search interval, which signals the data wants an elasticity outside
    it. ``trace`` (optional list) collects (beta, best sse so far) at
    each accepted outer evaluation.
    """
    lo, hi = beta_range
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < 1.0 < hi):
        raise ValueError("beta_range must be a finite interval containing 1")
    panel.require_repeated_quarters()
    entries, firms, idx, _, ln_s = _sorted_arrays(panel)
    n_firms = len(firms)
    fwd, f_mid, t = _ev_design(entries)
    # seed the inner solves at the naive per-firm scale for beta = 1
    counts = np.bincount(idx, minlength=n_firms)
    ln_d0 = np.bincount(idx, weights=ln_s, minlength=n_firms) / counts

    best = float("inf")
    cache: dict[float, tuple[float, np.ndarray]] = {}

    def objective(beta):
        nonlocal best
        if beta not in cache:
            cache[beta] = _ev_objective(beta, ln_s, idx, n_firms, fwd, f_mid, t,
                                        inner_tol, ln_d0)
        sse = cache[beta][0]
        if trace is not None:
            best = min(best, sse)
            trace.append((beta, best))
        return sse

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    while (b - a) > outer_tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)
    beta_hat = c if fc <= fd else d
    if beta_hat - lo < 2.0 * outer_tol or hi - beta_hat < 2.0 * outer_tol:
        raise CalibrationDiverged(
            f"elasticity search ended at the boundary ({beta_hat:.4f} of "
            f"[{lo}, {hi}]); widen beta_range")
    sse, ln_d = cache[beta_hat]
    deltas = {f: float(np.exp(ln_d[i])) for i, f in enumerate(firms)}
    return CevGroupFit(float(beta_hat), deltas, FitMethod.EQUIVALENT_VOL, sse, len(entries))


def dd_panel(panel: AssetPanel, fit: CevGroupFit, grid: PdeGrid | None = None,
             check_convergence: bool = False) -> list[DefaultDistanceRecord]:
    """CEV default probability and distance for every panel entry.

    Entries sharing (delta, default point, rate, horizon) are answered
    from a single PDE solve, since the solution is a full function of
    the initial value. Output order matches the panel entry order.
    """
    missing = sorted({e.firm_id for e in panel.entries} - fit.deltas.keys())
    if missing:
        raise ValueError(f"fit does not cover firms: {missing[:5]}")
    grid = grid or PdeGrid()
    model = Model.CEV_FE if fit.method == FitMethod.FIXED_EFFECTS else Model.CEV_EV

    groups: dict[tuple, list[int]] = {}
    for i, e in enumerate(panel.entries):
        key = (fit.deltas[e.firm_id], e.default_point, e.rate, e.horizon)
        groups.setdefault(key, []).append(i)

    probs = np.empty(len(panel.entries))
    for (delta, dpt, rate, horizon), idxs in groups.items():
        values = np.array([panel.entries[i].asset_value for i in idxs])
        if dpt == 0.0:
            probs[idxs] = 0.0
            continue
        p = cev_default_probability(values, CevParams(delta, fit.beta), dpt, rate,
                                    horizon, grid, check_convergence=check_convergence)
        probs[idxs] = p

    records = []
    for i, e in enumerate(panel.entries):
        p = float(probs[i])
        records.append(DefaultDistanceRecord(e.firm_id, e.quarter, model, p, cev_dd(p)))
    return records
