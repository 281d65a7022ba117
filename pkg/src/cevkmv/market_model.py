"""Black-Scholes-Merton machinery and the classical KMV inversion.

Equity is treated as a European call on the firm's assets struck at the
default point. Given observed equity value and equity volatility, the
unobservable asset value and asset volatility solve the two-equation
system

    V_E     = V_A N(d1) - e^{-rT} D N(d2)
    sigma_E = sigma_A (V_A / V_E) N(d1)

which ``invert_kmv`` solves with a damped Newton iteration on
(ln V_A, ln sigma_A); the log parameterization keeps both unknowns
positive without constraints. A nested-bisection fallback covers inputs
where Newton stalls. All functions here are pure and safe to call
concurrently; per-firm inversions are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NoConvergence
from .normal import norm_cdf, norm_pdf

RESIDUAL_TOL = 1e-10
MAX_ITER = 100


class Group(str, Enum):
    ST = "ST"
    NON_ST = "NonST"


@dataclass(frozen=True)
class FirmQuarterObservation:
    """One firm-quarter of market inputs.

    equity_value and default_point are in currency units, equity_vol is
    an annualized fraction, rate is continuously compounded, horizon is
    in years.
    """

    firm_id: str
    quarter: str
    equity_value: float
    equity_vol: float
    default_point: float
    rate: float
    horizon: float
    group: Group = Group.ST

    def __post_init__(self):
        if not (self.equity_value > 0):
            raise ValueError("equity_value must be positive")
        if not (self.equity_vol > 0):
            raise ValueError("equity_vol must be positive")
        if not (self.horizon > 0):
            raise ValueError("horizon must be positive")
        if not (self.default_point >= 0):
            raise ValueError("default_point must be non-negative")
        if not math.isfinite(self.rate):
            raise ValueError("rate must be finite")


@dataclass(frozen=True)
class AssetSolution:
    """Inverted (asset value, asset volatility) pair.

    residual_norm is the max relative residual of the two pricing
    equations at the solution; degenerate flags the zero-debt case where
    the inversion is the identity.
    """

    asset_value: float
    asset_vol: float
    residual_norm: float
    iterations: int
    degenerate: bool = False


def _validate_bsm_inputs(asset_value, default_point, rate, vol, horizon):
    vals = np.broadcast_arrays(
        np.asarray(asset_value, dtype=float),
        np.asarray(default_point, dtype=float),
        np.asarray(rate, dtype=float),
        np.asarray(vol, dtype=float),
        np.asarray(horizon, dtype=float),
    )
    v, d, r, s, t = vals
    for arr in vals:
        if not np.all(np.isfinite(arr)):
            raise ValueError("inputs must be finite")
    if np.any(v <= 0):
        raise ValueError("asset_value must be positive")
    if np.any(d < 0):
        raise ValueError("default_point must be non-negative")
    if np.any(s < 0):
        raise ValueError("vol must be non-negative")
    if np.any(t <= 0):
        raise ValueError("horizon must be positive")
    return v, d, r, s, t


def bsm_d2(asset_value, default_point, rate, vol, horizon):
    """d2 = [ln(V/D) + (r - vol^2/2) T] / (vol sqrt(T)).

    Infinite where D = 0 or vol = 0 (sign from the log-moneyness).
    """
    v, d, r, s, t = _validate_bsm_inputs(asset_value, default_point, rate, vol, horizon)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.log(v / d) + (r - 0.5 * s * s) * t
        out = num / (s * np.sqrt(t))
        out = np.where(d == 0, np.inf, out)
        out = np.where((d > 0) & (s == 0), np.sign(num) * np.inf, out)
    if np.ndim(asset_value) == 0 and np.ndim(default_point) == 0 and np.ndim(vol) == 0:
        return float(out)
    return out


def bsm_call(asset_value, default_point, rate, vol, horizon):
    """European call value V N(d1) - e^{-rT} D N(d2).

    Zero strike degenerates to the asset itself; zero volatility to the
    discounted forward intrinsic value.
    """
    v, d, r, s, t = _validate_bsm_inputs(asset_value, default_point, rate, vol, horizon)
    disc_d = d * np.exp(-r * t)
    d2 = bsm_d2(v, d, r, s, t)
    d2 = np.asarray(d2, dtype=float)
    d1 = np.where(np.isfinite(d2), d2 + s * np.sqrt(t), d2)
    with np.errstate(invalid="ignore"):
        out = v * norm_cdf(d1) - disc_d * norm_cdf(d2)
    out = np.where(d == 0, v, out)
    out = np.where((d > 0) & (s == 0), np.maximum(v - disc_d, 0.0), out)
    if np.ndim(asset_value) == 0 and np.ndim(default_point) == 0 and np.ndim(vol) == 0:
        return float(out)
    return out


def kmv_equity_vol(asset_value, equity_value, asset_vol, d1):
    """Instantaneous equity volatility sigma_A (V_A / V_E) N(d1)."""
    ve = np.asarray(equity_value, dtype=float)
    if np.any(ve <= 0):
        raise ValueError("equity_value must be positive")
    out = np.asarray(asset_vol, dtype=float) * np.asarray(asset_value, dtype=float) / ve * norm_cdf(d1)
    if np.ndim(asset_value) == 0 and np.ndim(equity_value) == 0:
        return float(out)
    return out


def forward_equity(asset_value, asset_vol, default_point, rate, horizon):
    """Map (V_A, sigma_A) to the implied (V_E, sigma_E) pair."""
    ve = bsm_call(asset_value, default_point, rate, asset_vol, horizon)
    d2 = bsm_d2(asset_value, default_point, rate, asset_vol, horizon)
    d1 = np.where(np.isfinite(np.asarray(d2)), np.asarray(d2) + np.asarray(asset_vol) * np.sqrt(np.asarray(horizon, dtype=float)), np.asarray(d2))
    se = kmv_equity_vol(asset_value, ve, asset_vol, d1)
    if np.ndim(asset_value) == 0:
        return float(ve), float(se)
    return ve, se


def _residuals(a, s, obs):
    """Log residuals of both pricing equations at (ln V, ln sigma).

    Log space equilibrates the system for deep out-of-the-money equity,
    where the call value spans many orders of magnitude; at the
    tolerance level log and relative residuals coincide.
    """
    v = math.exp(a)
    sig = math.exp(s)
    sqt = math.sqrt(obs.horizon)
    d2 = (math.log(v / obs.default_point) + (obs.rate - 0.5 * sig * sig) * obs.horizon) / (sig * sqt)
    d1 = d2 + sig * sqt
    nd1 = norm_cdf(d1)
    call = v * nd1 - obs.default_point * math.exp(-obs.rate * obs.horizon) * norm_cdf(d2)
    evol = sig * v * nd1 / obs.equity_value
    if call <= 0.0 or evol <= 0.0:
        raise OverflowError("price or vol underflowed")
    f1 = math.log(call / obs.equity_value)
    f2 = math.log(evol / obs.equity_vol)
    return f1, f2, v, sig, d1, d2, nd1, call


def _jacobian(v, sig, d1, nd1, call, obs):
    """Analytic Jacobian of the log residuals wrt (ln V, ln sigma)."""
    sqt = math.sqrt(obs.horizon)
    pdf1 = norm_pdf(d1)
    d2 = d1 - sig * sqt
    # d ln(call): delta = N(d1), vega = V phi(d1) sqrt(T)
    j11 = v * nd1 / call
    j12 = sig * v * pdf1 * sqt / call
    # d ln(sigma_E model) = d ln(sigma V N(d1))
    j21 = 1.0 + pdf1 / (sig * sqt * nd1) if nd1 > 0 else math.inf
    j22 = 1.0 - pdf1 * d2 / nd1 if nd1 > 0 else math.inf
    return j11, j12, j21, j22


def _ncdf(x: float) -> float:
    # scalar fast path for solver internals; final residuals are still
    # measured with the package CDF
    return 0.5 * math.erfc(-x / 1.4142135623730951)


def _call_scalar(v, d, r, s, t, disc_d):
    d2 = (math.log(v / d) + (r - 0.5 * s * s) * t) / (s * math.sqrt(t))
    d1 = d2 + s * math.sqrt(t)
    return v * _ncdf(d1) - disc_d * _ncdf(d2), d1


def _bisection_fallback(obs, iterations_used):
    """Nested 1-D solve: outer bisection on sigma_A, inner on V_A.

    For fixed sigma_A the call value is strictly increasing in V_A and
    brackets V_E on [V_E, V_E + D e^{-rT}], so the inner root always
    exists; the outer function (model equity vol minus observed) is
    then bracketed by expansion. Slow but essentially unconditionally
    convergent; only consulted when Newton stalls.
    """
    disc_d = obs.default_point * math.exp(-obs.rate * obs.horizon)

    def inner_asset_value(sig):
        # safeguarded Newton on ln V within the analytic bracket
        lo, hi = obs.equity_value, obs.equity_value + disc_d
        v = hi
        for _ in range(100):
            call, d1 = _call_scalar(v, obs.default_point, obs.rate, sig, obs.horizon, disc_d)
            if call > obs.equity_value:
                hi = min(hi, v)
            elif call < obs.equity_value:
                lo = max(lo, v)
            if call > 0:
                f = math.log(call / obs.equity_value)
                slope = v * _ncdf(d1) / call
                v_new = v * math.exp(-f / slope) if slope > 0 else 0.5 * (lo + hi)
            else:
                v_new = 0.5 * (lo + hi)
            if not (lo <= v_new <= hi):
                v_new = 0.5 * (lo + hi)
            if abs(v_new - v) <= 1e-15 * v:
                return v_new
            v = v_new
        return v

    def outer(sig):
        v = inner_asset_value(sig)
        _, d1 = _call_scalar(v, obs.default_point, obs.rate, sig, obs.horizon, disc_d)
        return sig * v * _ncdf(d1) / obs.equity_value - obs.equity_vol, v

    lo, hi = 1e-10, max(4.0 * obs.equity_vol, 1.0)
    f_lo, _ = outer(lo)
    f_hi, _ = outer(hi)
    expand = 0
    while f_lo * f_hi > 0 and expand < 60:
        hi *= 2.0
        f_hi, _ = outer(hi)
        expand += 1
    if f_lo * f_hi > 0:
        raise NoConvergence("could not bracket an asset volatility consistent with the equity inputs")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        f_mid, _ = outer(mid)
        if f_lo * f_mid <= 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo <= 1e-16 * hi:
            break
    sig = 0.5 * (lo + hi)
    _, v = outer(sig)
    f1, f2, v, sig, *_ = _residuals(math.log(v), math.log(sig), obs)
    res = max(abs(math.expm1(f1)), abs(math.expm1(f2)))
    if res > 1e-7:
        raise NoConvergence(f"bisection fallback stalled at residual {res:.3e}")
    return AssetSolution(v, sig, res, iterations_used)


def invert_kmv(obs: FirmQuarterObservation, tol: float = RESIDUAL_TOL,
               max_iter: int = MAX_ITER) -> AssetSolution:
    """Recover (asset value, asset volatility) from one observation.

    Deterministic for identical inputs. Firms with a zero default point
    are returned as the identity solution with ``degenerate=True``
    rather than failing, since the call on assets is then the assets
    themselves. Raises NoConvergence when neither the damped Newton
    iteration nor the bisection fallback reaches the residual
    tolerance.
    """
    if obs.default_point == 0.0:
        return AssetSolution(obs.equity_value, obs.equity_vol, 0.0, 0, degenerate=True)

    disc_d = obs.default_point * math.exp(-obs.rate * obs.horizon)
    v0 = obs.equity_value + disc_d
    s0 = obs.equity_vol * obs.equity_value / v0
    a, s = math.log(v0), math.log(max(s0, 1e-12))

    f1, f2, v, sig, d1, d2, nd1, call = _residuals(a, s, obs)
    norm = max(abs(f1), abs(f2))
    it = 0
    stalled = False
    slow = 0
    while norm > tol:
        if it >= max_iter:
            raise NoConvergence(
                f"KMV inversion did not reach tolerance {tol:.1e} in {max_iter} iterations"
            )
        it += 1
        j11, j12, j21, j22 = _jacobian(v, sig, d1, nd1, call, obs)
        det = j11 * j22 - j12 * j21
        if det == 0 or not math.isfinite(det):
            stalled = True
            break
        da = (-f1 * j22 + f2 * j12) / det
        ds = (-f2 * j11 + f1 * j21) / det
        step = 1.0
        improved = False
        for _ in range(40):
            try:
                t1, t2, tv, tsig, td1, td2, tnd1, tcall = _residuals(a + step * da, s + step * ds, obs)
            except (OverflowError, ValueError):
                step *= 0.5
                continue
            tnorm = max(abs(t1), abs(t2))
            if math.isfinite(tnorm) and tnorm < norm:
                slow = slow + 1 if tnorm > 0.98 * norm else 0
                a, s = a + step * da, s + step * ds
                f1, f2, v, sig, d1, d2, nd1, call = t1, t2, tv, tsig, td1, td2, tnd1, tcall
                norm = tnorm
                improved = True
                break
            step *= 0.5
        if not improved or slow >= 12:
            # creeping progress means Newton is fighting the geometry;
            # the monotone nested solve is more reliable there
            stalled = True
            break
    if not stalled:
        res = max(abs(math.expm1(f1)), abs(math.expm1(f2)))
        return AssetSolution(v, sig, res, it)
    return _bisection_fallback(obs, it)


def classical_dd(solution: AssetSolution, obs: FirmQuarterObservation) -> float:
    """Classical distance to default d2 from an inverted solution.

    Returns +inf for zero-debt firms (the degenerate case carries no
    default risk at the horizon).
    """
    if obs.default_point == 0.0:
        return math.inf
    return float(bsm_d2(solution.asset_value, obs.default_point, obs.rate,
                        solution.asset_vol, obs.horizon))


def classical_default_probability(solution: AssetSolution, obs: FirmQuarterObservation) -> float:
    """N(-d2); zero for zero-debt firms."""
    dd = classical_dd(solution, obs)
    if math.isinf(dd):
        return 0.0
    return norm_cdf(-dd)
