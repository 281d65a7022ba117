"""Default probabilities when volatility depends on the asset level.

Under constant elasticity of variance the local volatility is
delta * V^(beta-1): beta < 1 means volatility rises as the firm
shrinks toward its default point, fattening the lower tail. The engine
solves the backward PDE for P(V_T < D); at beta = 1 it must agree with
the lognormal closed form, and away from it the probabilities respond
to beta exactly as the volatility path suggests.
"""

import numpy as np

from cevkmv.cev_engine import CevParams, cev_dd, cev_default_probability
from cevkmv.market_model import bsm_d2
from cevkmv.normal import norm_cdf

v0, d, r, t = 150.0, 80.0, 0.03, 1.0
vol_at_start = 0.25

print("sanity: beta = 1 reproduces the closed form")
p_pde = cev_default_probability(v0, CevParams(vol_at_start, 1.0), d, r, t)
p_cf = norm_cdf(-bsm_d2(v0, d, r, vol_at_start, t))
print(f"  PDE {p_pde:.8f} vs closed form {p_cf:.8f}  (diff {abs(p_pde-p_cf):.2e})")

print("\nelasticity sweep, local vol pinned at the start level:")
print("  beta   P(V_T < D)   distance")
for beta in (0.6, 0.8, 1.0, 1.2, 1.4):
    delta = vol_at_start * v0 ** (1.0 - beta)
    p = cev_default_probability(v0, CevParams(delta, beta), d, r, t)
    print(f"  {beta:4.2f}   {p:.6f}    {cev_dd(p):6.3f}")
print("lower beta -> volatility grows on the way down -> more defaults")

print("\none PDE solve prices a whole range of start values:")
values = np.array([90.0, 110.0, 150.0, 250.0, 400.0])
params = CevParams(vol_at_start * v0 ** 0.3, 0.7)
probs = cev_default_probability(values, params, d, r, t)
for v, p in zip(values, probs):
    print(f"  V0 = {v:6.1f}:  p = {p:.6f}")
