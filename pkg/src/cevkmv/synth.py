"""Synthetic raw-input generation for studies and pipeline tests.

Builds the three pipeline input CSVs from planted group parameters by
simulating the model end to end at daily resolution:

* each firm draws a size, a base volatility and a leverage ratio; its
  asset value follows the CEV diffusion day by day (Euler, 250
  steps/year) with the group elasticity and the firm's volatility
  scale;
* debt is sticky: the default point is set once per firm off its asset
  level at the first quarter end;
* the daily equity value is the asset call priced with the
  Hagan-Woodward equivalent volatility at the current asset level, so
  daily equity returns carry exactly the leverage-amplified local
  volatility the estimators are supposed to see;
* quarterly fundamentals snapshot the equity value at quarter ends.

The pipeline's trailing 250-day volatility estimator therefore sees
realistic, internally consistent dynamics (including the window's
natural lag), instead of values reverse-engineered to hit targets. An
optional microstructure noise adds annualized ``noise_sd`` of
model-free daily return variance.
"""

from __future__ import annotations

import datetime as dt
import math
from pathlib import Path

import numpy as np

from .cev_engine import CevParams, hagan_woodward_vol
from .market_model import Group, bsm_call
from .mc_oracle import GroupSpec
from .pipeline import RawInputs, next_quarter, quarter_end

# Planted so the classical model sees statistically identical groups
# while the CEV structure separates them: leverage and volatility
# levels match across groups (so classical DD distributions match by
# construction), and only the elasticity differs - volatility falling
# with size (beta < 1) for the high-risk group, rising for the other.
# Moderate leverage keeps the mechanical leverage amplification of
# equity volatility from drowning the elasticity signal in the
# trailing-window estimates.
ST_SPEC = GroupSpec(group=Group.ST, beta=0.60, vol_target=0.30,
                    asset_scale=8.7e9, leverage_center=0.15)
NONST_SPEC = GroupSpec(group=Group.NON_ST, beta=1.40, vol_target=0.30,
                       asset_scale=4.8e10, leverage_center=0.15)

_TRADING_DAYS_PER_YEAR = 250
_WARMUP_DAYS = 280  # trading days of history before the first quarter end


def quarter_labels(start: str, count: int) -> list[str]:
    labels = [start]
    for _ in range(count - 1):
        labels.append(next_quarter(labels[-1]))
    return labels


def _weekdays_ending_at(last: dt.date, count_before: int, first_needed: dt.date) -> list[dt.date]:
    """Weekdays covering [roughly count_before days before first_needed, last]."""
    start = first_needed - dt.timedelta(days=int(count_before * 7 / 5) + 10)
    days = []
    d = start
    while d <= last:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def simulate_raw_inputs(n_firms: int, n_quarters: int, noise_sd: float, seed: int,
                        st_spec: GroupSpec = ST_SPEC, nst_spec: GroupSpec = NONST_SPEC,
                        start: str = "2019Q1") -> RawInputs:
    """Deterministic synthetic RawInputs for a two-group study."""
    if st_spec.rate != nst_spec.rate or st_spec.horizon != nst_spec.horizon:
        raise ValueError("groups must share rate and horizon (rates are per quarter)")
    labels = quarter_labels(start, n_quarters)
    ends = [quarter_end(q) for q in labels]
    days = _weekdays_ending_at(ends[-1], _WARMUP_DAYS, ends[0])
    n_days = len(days)
    day_ord = [d.toordinal() for d in days]
    end_idx = [int(np.searchsorted(day_ord, e.toordinal(), side="right")) - 1
               for e in ends]
    if end_idx[0] < _WARMUP_DAYS:
        raise ValueError("warmup shorter than the volatility window")
    dt_step = 1.0 / _TRADING_DAYS_PER_YEAR

    returns: dict[str, list[tuple[dt.date, float]]] = {}
    fundamentals: dict[tuple[str, str], dict[str, float | None]] = {}
    groups: dict[str, Group] = {}

    for gi, spec in enumerate((st_spec, nst_spec)):
        rng = np.random.default_rng(np.random.SeedSequence((seed, gi, 0xD417)))
        size = rng.normal(math.log(spec.asset_scale), spec.asset_spread, n_firms)
        base_vol = np.exp(rng.normal(math.log(spec.vol_target), spec.vol_spread, n_firms))
        lev = spec.leverage_center * np.exp(rng.normal(0.0, spec.leverage_spread, n_firms))
        home = np.exp(size)
        delta = base_vol * home ** (1.0 - spec.beta)

        # daily CEV asset paths (full truncation keeps paths positive)
        v = home.copy()
        paths = np.empty((n_firms, n_days))
        paths[:, 0] = v
        shocks = rng.standard_normal((n_firms, n_days - 1))
        sq = math.sqrt(dt_step)
        for k in range(1, n_days):
            v = v + spec.rate * v * dt_step + delta * v**spec.beta * sq * shocks[:, k - 1]
            np.maximum(v, 1e-12 * home, out=v)
            paths[:, k] = v

        debt = lev * paths[:, end_idx[0]]
        equity = np.empty_like(paths)
        for i in range(n_firms):
            vols = hagan_woodward_vol(paths[i], debt[i], spec.rate, spec.horizon,
                                      CevParams(delta[i], spec.beta))
            equity[i] = bsm_call(paths[i], debt[i], spec.rate, vols, spec.horizon)

        rets = equity[:, 1:] / equity[:, :-1] - 1.0
        if noise_sd > 0:
            rets = rets + noise_sd * sq * rng.standard_normal(rets.shape)

        width = len(str(n_firms))
        for i in range(n_firms):
            firm = f"{spec.group.value}{i + 1:0{width}d}"
            groups[firm] = spec.group
            returns[firm] = [(days[k], float(rets[i, k - 1])) for k in range(1, n_days)]
            for q, k_end in zip(labels, end_idx):
                fundamentals[(firm, q)] = {
                    "equity_value": float(equity[i, k_end]),
                    "std_debt": 0.6 * float(debt[i]),
                    "ltd_debt": 0.8 * float(debt[i]),
                }

    rates = {q: st_spec.rate for q in labels}
    return RawInputs(returns, fundamentals, groups, rates, labels)


def write_raw_inputs(inputs: RawInputs, out_dir) -> dict[str, str]:
    """Write returns.csv, fundamentals.csv and rates.csv under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = ["firm_id,date,return"]
    for firm in sorted(inputs.returns):
        lines.extend(f"{firm},{d.isoformat()},{r!r}" for d, r in inputs.returns[firm])
    (out / "returns.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["firm_id,quarter,equity_value,std_debt,ltd_debt,group"]
    for firm, quarter in sorted(inputs.fundamentals):
        row = inputs.fundamentals[(firm, quarter)]
        cells = [firm, quarter]
        for name in ("equity_value", "std_debt", "ltd_debt"):
            value = row[name]
            cells.append("" if value is None else repr(float(value)))
        cells.append(inputs.groups[firm].value)
        lines.append(",".join(cells))
    (out / "fundamentals.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["quarter,rate"]
    lines.extend(f"{q},{inputs.rates[q]!r}" for q in inputs.quarters)
    (out / "rates.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    return {"returns": str(out / "returns.csv"),
            "fundamentals": str(out / "fundamentals.csv"),
            "rates": str(out / "rates.csv")}
