"""Structural credit risk under constant and level-dependent volatility.

The package computes distance to default two ways: the classical KMV
route (geometric Brownian motion assets, closed-form d2) and a
CEV-extended route, where the default probability is solved from a
backward PDE and mapped through the normal quantile. Group-level CEV
parameters are estimated either by a within (fixed-effects) regression
on log volatilities or by calibrating the Hagan-Woodward equivalent
volatility expansion. A small statistics module provides the gamma-MLE
mean test and the Wilcoxon rank-sum test used to compare groups, and a
pipeline module turns raw CSV inputs into report tables and plot data.
"""

from .cev_engine import (
    CevParams,
    DefaultDistanceRecord,
    Model,
    PdeGrid,
    cev_call_price,
    cev_dd,
    cev_default_probability,
    hagan_woodward_vol,
    implied_vol,
)
from .errors import (
    AllMissing,
    CalibrationDiverged,
    CevKmvError,
    DegenerateSample,
    ExclusionThresholdExceeded,
    GridTooCoarse,
    InsufficientHistory,
    NoConvergence,
    NoWithinVariation,
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
    AssetSolution,
    FirmQuarterObservation,
    Group,
    bsm_call,
    bsm_d2,
    classical_dd,
    classical_default_probability,
    forward_equity,
    invert_kmv,
    kmv_equity_vol,
)
from .mc_oracle import (
    Cev,
    Gbm,
    GroupSpec,
    SimSpec,
    simulate_default_prob,
    simulate_panel,
)
from .normal import norm_cdf, norm_pdf, norm_ppf
from .pipeline import (
    RawInputs,
    RunConfig,
    StudyBundle,
    default_point,
    emit_study,
    estimate_equity_vol,
    fill_missing,
    load_raw_inputs,
    parse_config,
    run_panel_study,
    run_study,
)
from .stats_tests import (
    GammaFit,
    TestReport,
    gamma_mle,
    make_test_report,
    z1_test,
    z2_wilcoxon,
)
from .synth import simulate_raw_inputs, write_raw_inputs

__version__ = "0.1.0"
