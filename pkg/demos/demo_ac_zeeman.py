"""
State-dependent microwave potentials
====================================

A microwave current on a chip wire makes a near field that follows the
static Biot-Savart rule. Detuned from the pi transitions it shifts |0>
and |1> in opposite directions.
"""

import numpy as np

from chipclock.constants import GAUSS
from chipclock.hyperfine import STATE_0, HyperfineState
from chipclock.mwnearfield import (
    differential_shift,
    dressed_moment_perturbation,
    mw_field_amplitude,
    polarization_components,
    potential_map,
    reference_configuration,
    transition_rabi,
)

# %%
# One point, 10 um above the wire
# -------------------------------
source, layout, point = reference_configuration()
b_mw = mw_field_amplitude(source, point)
pol = polarization_components(b_mw, layout.bias)
print(f"|B_mw| = {np.linalg.norm(b_mw) / GAUSS:.3f} G")
omega = transition_rabi(STATE_0, HyperfineState(2, -1), pol, np.linalg.norm(layout.bias))
print(f"Omega/2pi = {omega / 1e6:.3f} MHz")
print(f"U_mw/h = {differential_shift(source, point, layout) / 1e3:.2f} kHz")
print(f"dressed moment change: {dressed_moment_perturbation(STATE_0, source, point, layout):.2e} mu_B")

# %%
# Distance dependence
# -------------------
z = np.linspace(5e-6, 40e-6, 8)
m = potential_map(source, layout, np.column_stack([0 * z, 0 * z, z]))
for zi, u in zip(z, m.differential):
    print(f"  z = {zi * 1e6:5.1f} um  U_mw/h = {u / 1e3:9.2f} kHz")
slope = np.polyfit(np.log(z), np.log(np.abs(m.differential)), 1)[0]
print(f"log-log slope {slope:.3f}")
