"""
Clock stability from a noise budget
===================================

Operating on the slope of the Ramsey fringe turns population changes into
frequency estimates. The Allan deviation of those estimates shows white
frequency noise and, with a drifting reference, where the drift takes over.
"""

import numpy as np

from chipclock.clock import (
    NoiseBudget,
    ReferenceDrift,
    allan_deviation,
    field_noise_rms,
    fit_stability,
    projected_budget,
    run_clock,
)

# %%
# Shot-to-shot scatter
# --------------------
# A 5 mG offset from B0 makes 5 mG of field jitter a first-order noise source.

budget = NoiseBudget()
series = run_clock(budget, n_shots=10_000, seed=3)
print(f"field term alone: {field_noise_rms(budget) * 1e3:.1f} mHz rms")
print(f"inferred scatter: {series.delta_nu.std() * 1e3:.1f} mHz rms")

# %%
# Allan deviation
# ---------------
taus = 23.0 * 2 ** np.arange(0, 10)
allan = allan_deviation(series.fractional, 23.0, taus)
fit = fit_stability(allan, (23, 600))
for tau, sigma in zip(allan.taus, allan.sigma):
    print(f"  tau {tau:8.0f} s  sigma {sigma:.2e}")
print(f"sigma(tau) = {fit.coefficient:.2e} tau^-1/2")

# %%
# A drifting reference
# --------------------
drifting = run_clock(budget, n_shots=10_000, seed=3, drift=ReferenceDrift(linear_rate=2e-16))
fit = fit_stability(allan_deviation(drifting.fractional, 23.0, taus), (23, 200))
print(f"with drift the data leave the fit at tau = {fit.departure_tau} s")

# %%
# Projected performance
# ---------------------
budget, settings = projected_budget()
series = run_clock(budget, settings, n_shots=5000, seed=4)
fit = fit_stability(allan_deviation(series.fractional, settings.cycle_period), (6, 300))
print(f"shielded, shot-noise limited, 6 s cycle: {fit.coefficient:.2e} tau^-1/2")
