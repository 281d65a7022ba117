"""Recovering asset value and volatility from equity observations.

A listed firm shows us its equity market value and the volatility of
its stock, but credit risk lives on the asset side of the balance
sheet. Treating equity as a call on the assets struck at the default
point lets us back out both hidden quantities, and the distance to
default follows in closed form.
"""

from cevkmv.market_model import (
    FirmQuarterObservation,
    classical_dd,
    classical_default_probability,
    forward_equity,
    invert_kmv,
)

# magnitudes of a mid-size listed company: billions of currency units
obs = FirmQuarterObservation(
    firm_id="DEMO", quarter="2019Q1",
    equity_value=3.819e9, equity_vol=0.480,
    default_point=4.899e9,   # short-term debt + half the long-term debt
    rate=0.03, horizon=1.0,
)

sol = invert_kmv(obs)
print(f"asset value     : {sol.asset_value:,.0f}")
print(f"asset volatility: {sol.asset_vol:.4f}")
print(f"solved in {sol.iterations} Newton steps, residual {sol.residual_norm:.2e}")

dd = classical_dd(sol, obs)
pd = classical_default_probability(sol, obs)
print(f"distance to default: {dd:.3f}")
print(f"default probability: {pd:.3e}")

# the inversion is exact: pushing the solution back through the pricing
# equations reproduces the observations
ve, se = forward_equity(sol.asset_value, sol.asset_vol, obs.default_point,
                        obs.rate, obs.horizon)
print(f"round trip equity value {ve:,.0f} (input {obs.equity_value:,.0f})")
print(f"round trip equity vol   {se:.6f} (input {obs.equity_vol:.6f})")
