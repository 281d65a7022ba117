"""Monte-Carlo asset-path simulation and synthetic panel generation.

This module is the independent cross-check for the PDE engine and the
data generator for estimation and pipeline tests. GBM paths use the
exact lognormal step; CEV paths use Euler-Maruyama on the level with
full truncation and absorption at zero, since the origin is attainable
for beta < 1 and log-space stepping is undefined there.

Paths are generated in fixed-size blocks with seeds derived from the
spec seed, and block results are reduced in order, so a given SimSpec
always reproduces the same estimate bit for bit regardless of how the
blocks might be scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cev_engine import hagan_woodward_vol, CevParams
from .estimation import AssetPanel, PanelEntry
from .market_model import Group

_BLOCK = 250_000


@dataclass(frozen=True)
class Gbm:
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class Cev:
    delta: float
    beta: float

    def __post_init__(self):
        if not (self.delta > 0 and self.beta > 0):
            raise ValueError("delta and beta must be positive")


@dataclass(frozen=True)
class SimSpec:
    """One simulation request; identical specs give identical output."""

    dynamics: Gbm | Cev
    v0: float
    rate: float
    horizon: float
    steps: int
    paths: int
    seed: int

    def __post_init__(self):
        if not (self.v0 > 0):
            raise ValueError("v0 must be positive")
        if self.steps < 1 or self.paths < 1:
            raise ValueError("steps and paths must be at least 1")


class DefaultProbEstimate(NamedTuple):
    estimate: float
    std_error: float
    absorbed_fraction: float


def _terminal_values(spec: SimSpec, rng, n: int) -> np.ndarray:
    dt = spec.horizon / spec.steps
    if isinstance(spec.dynamics, Gbm):
        s = spec.dynamics.sigma
        drift = (spec.rate - 0.5 * s * s) * dt
        vol = s * math.sqrt(dt)
        ln_v = np.full(n, math.log(spec.v0))
        for _ in range(spec.steps):
            ln_v += drift + vol * rng.standard_normal(n)
        return np.exp(ln_v)
    delta, beta = spec.dynamics.delta, spec.dynamics.beta
    sqdt = math.sqrt(dt)
    v = np.full(n, spec.v0)
    for _ in range(spec.steps):
        z = rng.standard_normal(n)
        # full truncation: a path at exactly zero has zero drift and zero
        # diffusion, so absorption is automatic
        v = v + spec.rate * v * dt + delta * v**beta * sqdt * z
        np.maximum(v, 0.0, out=v)
    return v


def simulate_default_prob(spec: SimSpec, default_point: float) -> DefaultProbEstimate:
    """Fraction of paths finishing below the default point.

    Absorbed CEV paths end at zero and therefore count as defaults for
    any positive default point; their share is reported as a
    diagnostic. The standard error is the binomial sqrt(p(1-p)/paths).
    """
    if not (default_point > 0):
        raise ValueError("default_point must be positive")
    seed_seq = np.random.SeedSequence(spec.seed)
    n_blocks = (spec.paths + _BLOCK - 1) // _BLOCK
    children = seed_seq.spawn(n_blocks)
    defaults = 0
    absorbed = 0
    done = 0
    for child in children:
        n = min(_BLOCK, spec.paths - done)
        rng = np.random.default_rng(child)
        vt = _terminal_values(spec, rng, n)
        defaults += int(np.count_nonzero(vt < default_point))
        absorbed += int(np.count_nonzero(vt == 0.0))
        done += n
    p = defaults / spec.paths
    se = math.sqrt(max(p * (1.0 - p), 0.0) / spec.paths)
    return DefaultProbEstimate(p, se, absorbed / spec.paths)


@dataclass(frozen=True)
class GroupSpec:
    """Population parameters for one synthetic group of firms.

    Magnitudes default to billions-scale assets with leverage around
    half of assets, matching the order of magnitude of listed-company
    panels. ``beta`` and the per-firm volatility scale drive the
    planted local-volatility law; debt is sticky per firm, so leverage
    moves opposite to the asset value quarter over quarter.
    """

    group: Group = Group.ST
    beta: float = 1.0
    vol_target: float = 0.21        # local/equivalent vol at the home level
    vol_spread: float = 0.10        # lognormal sd of per-firm base vol
    asset_scale: float = 8.7e9      # median asset value
    asset_spread: float = 0.80      # lognormal sd of firm size
    walk_sd: float = 0.15           # quarter-over-quarter ln V innovation
    leverage_center: float = 0.55   # median D / V at the first quarter
    leverage_spread: float = 0.15   # lognormal sd of leverage across firms
    rate: float = 0.03
    horizon: float = 1.0


def simulate_panel(spec: GroupSpec, n_firms: int, n_quarters: int, noise_sd: float,
                   seed: int, vol_model: str = "local",
                   quarters: tuple[str, ...] | None = None) -> AssetPanel:
    """Deterministic synthetic asset panel with a planted elasticity.

    ``vol_model="local"`` plants the local-volatility law directly:
    sigma(i, t) = delta_i V(i, t)^{beta - 1} times lognormal noise.
    ``vol_model="equivalent"`` plants the Hagan-Woodward equivalent
    volatility at each observation instead, which is the right input
    model for the calibration route. Firm debt is drawn once per firm
    and held fixed across quarters.
    """
    if vol_model not in ("local", "equivalent"):
        raise ValueError("vol_model must be 'local' or 'equivalent'")
    if quarters is None:
        quarters = tuple(f"Q{k + 1:02d}" for k in range(n_quarters))
    if len(quarters) != n_quarters:
        raise ValueError("quarters labels must match n_quarters")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA55E7)))

    size = rng.normal(math.log(spec.asset_scale), spec.asset_spread, n_firms)
    base_vol = np.exp(rng.normal(math.log(spec.vol_target), spec.vol_spread, n_firms))
    lev = spec.leverage_center * np.exp(rng.normal(0.0, spec.leverage_spread, n_firms))
    walk = rng.normal(0.0, spec.walk_sd, (n_firms, n_quarters))
    noise = rng.normal(0.0, noise_sd, (n_firms, n_quarters)) if noise_sd > 0 else np.zeros((n_firms, n_quarters))

    ln_v = size[:, None] + np.cumsum(walk, axis=1)
    v = np.exp(ln_v)
    home = np.exp(size)
    debt = lev * home  # sticky: drawn at the home level, constant in t
    if vol_model == "local":
        # delta_i pins the planted local vol at the firm's home level
        delta = base_vol * home ** (1.0 - spec.beta)
    else:
        # anchor at the mid forward-strike level and fold in the expansion
        # corrections, so the planted expansion vol at the home level
        # equals base_vol for any beta (groups differing only in beta then
        # have identical planted vol levels)
        fwd_home = home * math.exp(spec.rate * spec.horizon)
        f_home = 0.5 * (fwd_home + debt)
        one_b = 1.0 - spec.beta
        c1 = one_b * (2.0 + spec.beta) * (fwd_home - debt) ** 2 / (24.0 * f_home**2)
        c2 = one_b**2 * base_vol**2 * spec.horizon / 24.0
        delta = base_vol * f_home**one_b / (1.0 + c1 + c2)

    width = len(str(n_firms))
    entries = []
    for i in range(n_firms):
        firm = f"{spec.group.value}{i + 1:0{width}d}"
        for t in range(n_quarters):
            if vol_model == "local":
                vol = delta[i] * v[i, t] ** (spec.beta - 1.0)
            else:
                vol = hagan_woodward_vol(v[i, t], debt[i], spec.rate, spec.horizon,
                                         CevParams(delta[i], spec.beta))
            vol *= math.exp(noise[i, t])
            entries.append(PanelEntry(firm, quarters[t], float(v[i, t]), float(vol),
                                      float(debt[i]), spec.rate, spec.horizon))
    return AssetPanel(tuple(entries), spec.group)
