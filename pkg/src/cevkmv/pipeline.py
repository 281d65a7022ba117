"""End-to-end study pipeline: CSV inputs to report tables and plot data.

Inputs are three CSV files (UTF-8, header row, ISO dates, decimal
point):

* returns: ``firm_id,date,return`` — simple daily returns, long format;
* fundamentals: ``firm_id,quarter,equity_value,std_debt,ltd_debt,group``
  with quarters labelled ``YYYYQn``; empty cells are missing values;
* rates: ``quarter,rate`` — continuously compounded annualized rates.

For every firm-quarter the pipeline estimates equity volatility from
the latest 250 daily returns before the quarter-end trading date,
builds the default point as short-term debt plus half the long-term
debt, inverts the KMV system, fits group-level CEV parameters with the
configured estimators, computes classical and CEV distances to default,
and runs both group-separation tests per quarter. Everything is
deterministic: rerunning a study on identical inputs writes
byte-identical files.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cev_engine import DefaultDistanceRecord, Model, PdeGrid
from .errors import (
    AllMissing,
    DegenerateSample,
    ExclusionThresholdExceeded,
    InsufficientHistory,
    NoConvergence,
    ValidationError,
)
from .estimation import (
    AssetPanel,
    CevGroupFit,
    FitMethod,
    PanelEntry,
    dd_panel,
    fit_equivalent_vol,
    fit_fixed_effects,
    fit_pinned_beta,
)
from .market_model import (
    FirmQuarterObservation,
    Group,
    bsm_d2,
    invert_kmv,
)
from .normal import norm_cdf
from .stats_tests import TestReport, gamma_mle, make_test_report

VOL_WINDOW = 250
EXCLUSION_LIMIT = 0.10

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")
_QUARTER_END_MONTH_DAY = {1: (3, 31), 2: (6, 30), 3: (9, 30), 4: (12, 31)}


def quarter_end(label: str) -> dt.date:
    m = _QUARTER_RE.match(label)
    if not m:
        raise ValidationError(f"bad quarter label: {label!r}")
    year, q = int(m.group(1)), int(m.group(2))
    month, day = _QUARTER_END_MONTH_DAY[q]
    return dt.date(year, month, day)


def next_quarter(label: str) -> str:
    m = _QUARTER_RE.match(label)
    year, q = int(m.group(1)), int(m.group(2))
    return f"{year + 1}Q1" if q == 4 else f"{year}Q{q + 1}"


# ---------------------------------------------------------------------------
# raw inputs


@dataclass
class RawInputs:
    """Parsed study inputs, indexed for deterministic iteration."""

    returns: dict[str, list[tuple[dt.date, float]]]  # sorted by date per firm
    fundamentals: dict[tuple[str, str], dict[str, float | None]]
    groups: dict[str, Group]
    rates: dict[str, float]
    quarters: list[str]

    def firms(self) -> list[str]:
        return sorted(self.groups)


def _read_csv_rows(path, expected_header):
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header != expected_header:
        raise ValidationError(
            f"{path}: expected header {','.join(expected_header)!r}, got {lines[0]!r}")
    return [ln.split(",") for ln in lines[1:]]


def _parse_float(token: str, where: str) -> float | None:
    token = token.strip()
    if token == "":
        return None
    try:
        return float(token)
    except ValueError as exc:
        raise ValidationError(f"{where}: bad number {token!r}") from exc


def load_raw_inputs(returns_path, fundamentals_path, rates_path) -> RawInputs:
    returns: dict[str, list[tuple[dt.date, float]]] = {}
    for row in _read_csv_rows(returns_path, ["firm_id", "date", "return"]):
        if len(row) != 3:
            raise ValidationError(f"{returns_path}: bad row {row!r}")
        firm = row[0].strip()
        try:
            date = dt.date.fromisoformat(row[1].strip())
        except ValueError as exc:
            raise ValidationError(f"{returns_path}: bad date {row[1]!r}") from exc
        value = _parse_float(row[2], returns_path)
        if value is None:
            raise ValidationError(f"{returns_path}: missing return for {firm} {date}")
        returns.setdefault(firm, []).append((date, value))
    for firm, series in returns.items():
        series.sort(key=lambda p: p[0])

    fundamentals: dict[tuple[str, str], dict[str, float | None]] = {}
    groups: dict[str, Group] = {}
    quarters: set[str] = set()
    header = ["firm_id", "quarter", "equity_value", "std_debt", "ltd_debt", "group"]
    for row in _read_csv_rows(fundamentals_path, header):
        if len(row) != 6:
            raise ValidationError(f"{fundamentals_path}: bad row {row!r}")
        firm, quarter = row[0].strip(), row[1].strip()
        quarter_end(quarter)  # label validation
        quarters.add(quarter)
        try:
            group = Group(row[5].strip())
        except ValueError as exc:
            raise ValidationError(f"{fundamentals_path}: bad group {row[5]!r}") from exc
        if groups.setdefault(firm, group) != group:
            raise ValidationError(f"{fundamentals_path}: {firm} has conflicting groups")
        fundamentals[(firm, quarter)] = {
            "equity_value": _parse_float(row[2], fundamentals_path),
            "std_debt": _parse_float(row[3], fundamentals_path),
            "ltd_debt": _parse_float(row[4], fundamentals_path),
        }

    rates: dict[str, float] = {}
    for row in _read_csv_rows(rates_path, ["quarter", "rate"]):
        if len(row) != 2:
            raise ValidationError(f"{rates_path}: bad row {row!r}")
        value = _parse_float(row[1], rates_path)
        if value is None:
            raise ValidationError(f"{rates_path}: missing rate for {row[0]!r}")
        rates[row[0].strip()] = value

    ordered = sorted(quarters)
    missing_rates = [q for q in ordered if q not in rates]
    if missing_rates:
        raise ValidationError(f"rates file lacks quarters: {missing_rates}")
    return RawInputs(returns, fundamentals, groups, rates, ordered)


# ---------------------------------------------------------------------------
# elementary operations


def estimate_equity_vol(returns, as_of: dt.date) -> float:
    """Annualized volatility from the latest 250 returns before as_of.

    sigma = sqrt(250/249 * sum (r_s - rbar)^2) over the window, which
    is the annualized sample standard deviation with daily data.
    """
    window = [r for d, r in returns if d < as_of][-VOL_WINDOW:]
    if len(window) < VOL_WINDOW:
        raise InsufficientHistory(
            f"{len(window)} returns before {as_of}, need {VOL_WINDOW}")
    arr = np.asarray(window, dtype=float)
    rbar = float(np.mean(arr))
    return math.sqrt(VOL_WINDOW / (VOL_WINDOW - 1.0) * float(np.sum((arr - rbar) ** 2)))


def default_point(std_debt: float, ltd_debt: float) -> float:
    """Short-term debt plus half the long-term debt."""
    if std_debt < 0 or ltd_debt < 0:
        raise ValueError("debt components must be non-negative")
    return std_debt + 0.5 * ltd_debt


def fill_missing(values):
    """Fill gaps with the temporally nearest observation, earlier on ties.

    ``values`` is a sequence over the quarter grid with None marking
    gaps. Returns the filled list and the fill log as (index,
    source_index) pairs. Raises AllMissing when nothing is observed.
    """
    observed = [i for i, v in enumerate(values) if v is not None]
    if not observed:
        raise AllMissing("no observed value to fill from")
    filled = list(values)
    log = []
    for i, v in enumerate(values):
        if v is not None:
            continue
        src = min(observed, key=lambda j: (abs(j - i), j))
        filled[i] = values[src]
        log.append((i, src))
    return filled, log


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    horizon: float = 1.0
    beta_lo: float = 0.2
    beta_hi: float = 2.0
    num_space: int = 800
    num_time: int = 400
    rannacher_steps: int = 2
    grid_tol: float = 1e-4
    check_grid: bool = False
    estimator: str = "Both"          # FixedEffects | EquivalentVol | Both
    fit_scope: str = "Pooled"        # Pooled | PerQuarter
    missing_policy: str = "NearestNeighbor"
    force_beta: float | None = None
    emit_plots: bool = True

    def __post_init__(self):
        if self.estimator not in ("FixedEffects", "EquivalentVol", "Both"):
            raise ValidationError(f"bad estimator: {self.estimator!r}")
        if self.fit_scope not in ("Pooled", "PerQuarter"):
            raise ValidationError(f"bad fit_scope: {self.fit_scope!r}")
        if self.missing_policy != "NearestNeighbor":
            raise ValidationError(f"bad missing_policy: {self.missing_policy!r}")
        if not (self.horizon > 0):
            raise ValidationError("horizon must be positive")

    def grid(self) -> PdeGrid:
        return PdeGrid(num_space=self.num_space, num_time=self.num_time,
                       rannacher_steps=self.rannacher_steps, tolerance=self.grid_tol)

    def methods(self) -> list[FitMethod]:
        if self.estimator == "FixedEffects":
            return [FitMethod.FIXED_EFFECTS]
        if self.estimator == "EquivalentVol":
            return [FitMethod.EQUIVALENT_VOL]
        return [FitMethod.FIXED_EFFECTS, FitMethod.EQUIVALENT_VOL]


_CONFIG_KEYS = {
    "horizon": float, "beta_lo": float, "beta_hi": float, "num_space": int,
    "num_time": int, "rannacher_steps": int, "grid_tol": float,
    "check_grid": bool, "estimator": str, "fit_scope": str,
    "missing_policy": str, "force_beta": float, "emit_plots": bool,
}


def parse_config(path) -> RunConfig:
    """Flat ``key = value`` file; '#' starts a comment, blanks ignored."""
    overrides = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            if kind is bool:
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                overrides[key] = value.lower() == "true"
            elif key == "force_beta" and value.lower() in ("none", ""):
                overrides[key] = None
            else:
                overrides[key] = kind(value)
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad value {value!r} for {key}") from exc
    return RunConfig(**overrides)


# ---------------------------------------------------------------------------
# study bundle


@dataclass(frozen=True)
class Exclusion:
    firm_id: str
    quarter: str       # "*" when the whole firm is excluded
    group: str
    reason: str


@dataclass(frozen=True)
class QuarterSummary:
    quarter: str
    group: str
    mean: float
    std: float
    alpha: float
    beta: float
    n_used: int
    n_dropped: int     # non-positive or non-finite distances left out


@dataclass
class StudyBundle:
    """Everything a study produced; emission is a pure view of this."""

    config: RunConfig
    quarters: list[str]
    panels: dict[str, AssetPanel]
    fits: dict[tuple[str, str], CevGroupFit]          # (group, method) -> fit
    records: dict[str, list[DefaultDistanceRecord]]   # model value -> records
    summaries: dict[str, list[QuarterSummary]]        # model value -> rows
    reports: dict[str, list[TestReport]]              # model value -> per quarter
    exclusions: list[Exclusion]
    fill_log: list[tuple[str, str, str, str]]         # firm, field, quarter, source
    group_of: dict[str, str]
    input_counts: dict[str, int]                      # group -> firm-quarters


def _model_for(method: FitMethod) -> Model:
    return Model.CEV_FE if method == FitMethod.FIXED_EFFECTS else Model.CEV_EV


def _summarize(quarter, group, sample) -> QuarterSummary:
    finite = np.asarray([x for x in sample if math.isfinite(x)], dtype=float)
    positive = finite[finite > 0]
    dropped = len(sample) - positive.size
    mean = float(np.mean(finite)) if finite.size else math.nan
    std = float(np.std(finite, ddof=1)) if finite.size > 1 else math.nan
    try:
        fit = gamma_mle(positive) if positive.size >= 2 else None
    except DegenerateSample:
        fit = None
    alpha = fit.alpha if fit else math.nan
    beta = fit.beta if fit else math.nan
    return QuarterSummary(quarter, group, mean, std, alpha, beta,
                          int(positive.size), int(dropped))


def run_study(inputs: RawInputs, config: RunConfig) -> StudyBundle:
    """Run the full pipeline; see the module docstring for the stages."""
    quarters = inputs.quarters
    if not quarters:
        raise ValidationError("no quarters in the fundamentals file")
    firms = inputs.firms()
    exclusions: list[Exclusion] = []
    fill_log: list[tuple[str, str, str, str]] = []

    # fill fundamentals on the quarter grid, then build observations
    observations: dict[tuple[str, str], FirmQuarterObservation] = {}
    for firm in firms:
        group = inputs.groups[firm]
        fields = {}
        try:
            for name in ("equity_value", "std_debt", "ltd_debt"):
                raw = [inputs.fundamentals.get((firm, q), {}).get(name) for q in quarters]
                filled, log = fill_missing(raw)
                fields[name] = filled
                for i, src in log:
                    fill_log.append((firm, name, quarters[i], quarters[src]))
        except AllMissing:
            exclusions.append(Exclusion(firm, "*", group.value, "all fundamentals missing"))
            continue
        series = inputs.returns.get(firm, [])
        for k, q in enumerate(quarters):
            end = quarter_end(q)
            dates = [d for d, _ in series if d <= end]
            if not dates:
                exclusions.append(Exclusion(firm, q, group.value, "no trading history"))
                continue
            as_of = max(dates)
            try:
                vol = estimate_equity_vol(series, as_of)
            except InsufficientHistory:
                exclusions.append(Exclusion(firm, q, group.value, "insufficient history"))
                continue
            equity = fields["equity_value"][k]
            if not (equity > 0) or vol <= 0:
                exclusions.append(Exclusion(firm, q, group.value, "non-positive equity data"))
                continue
            dpt = default_point(fields["std_debt"][k], fields["ltd_debt"][k])
            observations[(firm, q)] = FirmQuarterObservation(
                firm, q, equity, vol, dpt, inputs.rates[q], config.horizon, group)

    # invert firm by firm
    solutions = {}
    for key in sorted(observations):
        obs = observations[key]
        try:
            solutions[key] = invert_kmv(obs)
        except NoConvergence:
            exclusions.append(Exclusion(obs.firm_id, obs.quarter, obs.group.value,
                                        "inversion did not converge"))

    # drop firms too thin to estimate on, unless the slope is pinned
    if config.force_beta is None:
        counts: dict[str, int] = {}
        for firm, _ in solutions:
            counts[firm] = counts.get(firm, 0) + 1
        for key in sorted(k for k in solutions if counts[k[0]] < 2):
            obs = observations[key]
            exclusions.append(Exclusion(obs.firm_id, obs.quarter, obs.group.value,
                                        "fewer than two usable quarters"))
            del solutions[key]

    input_counts = {g.value: 0 for g in Group}
    for firm in firms:
        input_counts[inputs.groups[firm].value] += len(quarters)
    excluded_counts = {g.value: 0 for g in Group}
    for e in exclusions:
        excluded_counts[e.group] += len(quarters) if e.quarter == "*" else 1
    for g in sorted(input_counts):
        if input_counts[g] and excluded_counts[g] > EXCLUSION_LIMIT * input_counts[g]:
            raise ExclusionThresholdExceeded(
                f"{excluded_counts[g]} of {input_counts[g]} firm-quarters excluded "
                f"for group {g} (limit {EXCLUSION_LIMIT:.0%})")

    # panels per group
    panels: dict[str, AssetPanel] = {}
    for group in sorted(g.value for g in Group):
        entries = tuple(
            PanelEntry(obs.firm_id, obs.quarter, sol.asset_value, sol.asset_vol,
                       obs.default_point, obs.rate, obs.horizon)
            for key in sorted(solutions)
            for obs, sol in [(observations[key], solutions[key])]
            if obs.group.value == group)
        if entries:
            panels[group] = AssetPanel(entries, Group(group))

    group_of = {f: inputs.groups[f].value for f in firms}
    return _assemble_study(panels, list(quarters), config, exclusions, fill_log,
                           group_of, input_counts)


def run_panel_study(panels, config: RunConfig) -> StudyBundle:
    """Run the model comparison directly on inverted asset panels.

    Takes one AssetPanel per group (as produced by the Monte-Carlo
    panel generator or by an earlier raw run) and performs the same
    fitting, distance computation, summarizing and testing stages as
    ``run_study``, skipping ingestion. Classical distances come from
    the panel's (asset value, asset volatility) pairs directly.
    """
    by_group: dict[str, AssetPanel] = {}
    group_of: dict[str, str] = {}
    for panel in panels:
        g = panel.group.value
        if g in by_group:
            raise ValidationError(f"duplicate panel for group {g}")
        by_group[g] = panel
        for e in panel.entries:
            group_of[e.firm_id] = g
    quarters = sorted({e.quarter for p in by_group.values() for e in p.entries})
    input_counts = {g: len(p.entries) for g, p in sorted(by_group.items())}
    return _assemble_study(by_group, quarters, config, [], [], group_of, input_counts)


def _classical_records(panels) -> list[DefaultDistanceRecord]:
    records = []
    for group in sorted(panels):
        for e in panels[group].entries:
            if e.default_point == 0.0:
                dd, p = math.inf, 0.0
            else:
                dd = float(bsm_d2(e.asset_value, e.default_point, e.rate,
                                  e.asset_vol, e.horizon))
                p = norm_cdf(-dd)
            records.append(DefaultDistanceRecord(e.firm_id, e.quarter,
                                                 Model.CLASSICAL, p, dd))
    records.sort(key=lambda r: (r.firm_id, r.quarter))
    return records


def _assemble_study(panels, quarters, config, exclusions, fill_log, group_of,
                    input_counts) -> StudyBundle:
    records: dict[str, list[DefaultDistanceRecord]] = {
        Model.CLASSICAL.value: _classical_records(panels)}

    fits: dict[tuple[str, str], CevGroupFit] = {}
    grid = config.grid()
    for method in config.methods():
        model = _model_for(method)
        records[model.value] = []
        for group in sorted(panels):
            panel = panels[group]
            if config.fit_scope == "Pooled":
                fit = _fit_group(panel, method, config)
                fits[(group, method.value)] = fit
                records[model.value].extend(
                    dd_panel(panel, fit, grid, check_convergence=config.check_grid))
            else:
                for k, q in enumerate(quarters):
                    window = quarters[:max(k + 1, 2)]
                    sub = panel.subset(window)
                    fit = _fit_group(sub, method, config)
                    fits[(f"{group}@{q}", method.value)] = fit
                    quarter_slice = panel.subset([q])
                    records[model.value].extend(
                        dd_panel(quarter_slice, fit, grid,
                                 check_convergence=config.check_grid))
        records[model.value].sort(key=lambda r: (r.firm_id, r.quarter))

    summaries: dict[str, list[QuarterSummary]] = {}
    reports: dict[str, list[TestReport]] = {}
    for model_value, recs in records.items():
        rows, reps = [], []
        for q in quarters:
            by_group = {g.value: [] for g in Group}
            for r in recs:
                if r.quarter == q:
                    by_group[group_of[r.firm_id]].append(r.distance)
            for g in (Group.ST.value, Group.NON_ST.value):
                if by_group[g]:
                    rows.append(_summarize(q, g, by_group[g]))
            # the gamma framework lives on (0, inf): the tests see the
            # strictly positive distances, with drops counted per summary
            st = [x for x in by_group[Group.ST.value] if math.isfinite(x) and x > 0]
            nst = [x for x in by_group[Group.NON_ST.value] if math.isfinite(x) and x > 0]
            if len(st) >= 2 and len(nst) >= 2:
                try:
                    reps.append(make_test_report(q, st, nst))
                except DegenerateSample:
                    pass
        summaries[model_value] = rows
        reports[model_value] = reps

    return StudyBundle(config, list(quarters), panels, fits, records, summaries,
                       reports, exclusions, fill_log, group_of, input_counts)


def _fit_group(panel: AssetPanel, method: FitMethod, config: RunConfig) -> CevGroupFit:
    if config.force_beta is not None:
        return fit_pinned_beta(panel, config.force_beta, method)
    if method == FitMethod.FIXED_EFFECTS:
        return fit_fixed_effects(panel)
    return fit_equivalent_vol(panel, beta_range=(config.beta_lo, config.beta_hi))


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _gamma_density(alpha, beta, xs):
    return np.exp(alpha * math.log(beta) - math.lgamma(alpha)
                  + (alpha - 1.0) * np.log(xs) - beta * xs)


def emit_study(bundle: StudyBundle, out_dir) -> list[str]:
    """Write the study bundle to ``out_dir``; returns the file names.

    Pure view: emitting the same bundle twice produces byte-identical
    files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    def emit_csv(name, header, rows):
        _write_csv(out / name, header, rows)
        written.append(name)

    summary_header = ["Quarter", "group", "Mean", "Std.", "Alpha", "Beta"]
    model_files = {
        Model.CLASSICAL.value: "classical_dd_summary.csv",
        Model.CEV_FE.value: "cev_dd_summary_FixedEffects.csv",
        Model.CEV_EV.value: "cev_dd_summary_EquivalentVol.csv",
    }
    for model_value, name in model_files.items():
        if model_value not in bundle.summaries:
            continue
        rows = [(s.quarter, s.group, s.mean, s.std, s.alpha, s.beta)
                for s in bundle.summaries[model_value]]
        emit_csv(name, summary_header, rows)

    for model_value, recs in sorted(bundle.records.items()):
        rows = [(r.firm_id, r.quarter, r.model.value, r.probability, r.distance)
                for r in recs]
        emit_csv(f"dd_records_{model_value}.csv",
                 ["firm_id", "quarter", "model", "probability", "distance"], rows)

    for model_value, reps in sorted(bundle.reports.items()):
        rows = [(r.quarter, r.z1, r.p1, r.z2, r.p2) for r in reps]
        emit_csv(f"tests_{model_value}.csv", ["Quarter", "Z1", "p1", "Z2", "p2"], rows)

    # figure data: histogram + fitted gamma density for the last quarter
    last = bundle.quarters[-1]
    curves = {}
    for model_value, recs in sorted(bundle.records.items()):
        for group in sorted(bundle.panels):
            dd = np.asarray([r.distance for r in recs
                             if r.quarter == last and bundle.group_of[r.firm_id] == group
                             and math.isfinite(r.distance) and r.distance > 0])
            if dd.size < 2:
                continue
            counts, edges = np.histogram(dd, bins=20)
            dens = counts / (dd.size * np.diff(edges))
            emit_csv(f"fig1_hist_{model_value}_{group}.csv",
                     ["bin_left", "bin_right", "count", "density"],
                     [(edges[i], edges[i + 1], int(counts[i]), float(dens[i]))
                      for i in range(counts.size)])
            try:
                fit = gamma_mle(dd)
            except DegenerateSample:
                continue
            xs = np.linspace(max(float(dd.min()) * 0.5, 1e-6), float(dd.max()) * 1.2, 200)
            ys = _gamma_density(fit.alpha, fit.beta, xs)
            emit_csv(f"fig1_curve_{model_value}_{group}.csv", ["x", "gamma_density"],
                     [(float(a), float(b)) for a, b in zip(xs, ys)])
            curves[(model_value, group)] = (dd, edges, dens, xs, ys)

    for group in sorted(bundle.panels):
        panel = bundle.panels[group]
        rows = [(e.firm_id, e.quarter, math.log(e.asset_value), math.log(e.asset_vol))
                for e in panel.entries]
        emit_csv(f"fig2_{group}.csv",
                 ["firm_id", "quarter", "ln_asset_value", "ln_asset_vol"], rows)

    gap_models = [m for m in (Model.CLASSICAL.value, Model.CEV_FE.value, Model.CEV_EV.value)
                  if m in bundle.records]
    gap_rows = []
    for q in bundle.quarters:
        row = [q]
        for model_value in gap_models:
            st, nst = [], []
            for r in bundle.records[model_value]:
                if r.quarter == q and math.isfinite(r.distance):
                    (st if bundle.group_of[r.firm_id] == Group.ST.value else nst).append(r.distance)
            gap = float(np.mean(nst) - np.mean(st)) if st and nst else math.nan
            row.append(gap)
        gap_rows.append(tuple(row))
    emit_csv("fig3.csv", ["quarter"] + gap_models, gap_rows)

    manifest = {
        "config": {k: getattr(bundle.config, k) for k in (
            "horizon", "beta_lo", "beta_hi", "num_space", "num_time",
            "rannacher_steps", "grid_tol", "check_grid", "estimator",
            "fit_scope", "missing_policy", "force_beta", "emit_plots")},
        "quarters": bundle.quarters,
        "input_firm_quarters": bundle.input_counts,
        "exclusions": [
            {"firm_id": e.firm_id, "quarter": e.quarter, "group": e.group,
             "reason": e.reason} for e in bundle.exclusions],
        "fills": [
            {"firm_id": f, "field": fld, "quarter": q, "source_quarter": src}
            for f, fld, q, src in bundle.fill_log],
        "fits": {
            f"{group}/{method}": {
                "beta": fit.beta, "sse": fit.sse, "n_obs": fit.n_obs,
                "deltas": {k: fit.deltas[k] for k in sorted(fit.deltas)}}
            for (group, method), fit in sorted(bundle.fits.items())},
        "record_counts": {m: len(v) for m, v in sorted(bundle.records.items())},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append("manifest.json")

    if bundle.config.emit_plots:
        written.extend(_emit_plots(bundle, out, curves, gap_models, gap_rows))
    return written


def _emit_plots(bundle, out: Path, curves, gap_models, gap_rows) -> list[str]:
    import matplotlib
    matplotlib.use("svg", force=True)
    matplotlib.rcParams["svg.hashsalt"] = "cevkmv"  # deterministic ids
    import matplotlib.pyplot as plt

    written = []

    def save(fig, name):
        fig.savefig(out / name, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(name)

    for (model_value, group), (dd, edges, dens, xs, ys) in sorted(curves.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(edges[:-1], dens, width=np.diff(edges), align="edge",
               color="#9ecae1", edgecolor="white", label="distances")
        ax.plot(xs, ys, color="#d62728", label="fitted gamma density")
        ax.set_xlabel("distance to default")
        ax.set_ylabel("density")
        ax.set_title(f"{model_value} {group} ({bundle.quarters[-1]})")
        ax.legend()
        save(fig, f"fig1_{model_value}_{group}.svg")

    for group in sorted(bundle.panels):
        panel = bundle.panels[group]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.scatter([math.log(e.asset_value) for e in panel.entries],
                   [math.log(e.asset_vol) for e in panel.entries],
                   s=6, alpha=0.5, color="#3182bd")
        ax.set_xlabel("ln asset value")
        ax.set_ylabel("ln asset volatility")
        ax.set_title(f"volatility vs size, {group}")
        save(fig, f"fig2_{group}.svg")

    fig, ax = plt.subplots(figsize=(7, 4))
    colors = {"ClassicalKMV": "black", "CevKmvFE": "#1f77b4", "CevKmvEV": "#9467bd"}
    for j, model_value in enumerate(gap_models, start=1):
        ax.plot(range(len(gap_rows)), [row[j] for row in gap_rows],
                marker="o", label=model_value, color=colors.get(model_value))
    ax.set_xticks(range(len(gap_rows)))
    ax.set_xticklabels([row[0] for row in gap_rows], rotation=45, ha="right")
    ax.set_ylabel("mean DD difference (non-ST minus ST)")
    ax.legend()
    fig.tight_layout()
    save(fig, "fig3.svg")
    return written
