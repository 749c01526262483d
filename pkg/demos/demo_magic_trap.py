"""
Magic field and the chip trap
=============================

The clock pair |F=1, mF=-1> and |F=2, mF=+1> has the same first-order
Zeeman shift at a single field B0. Here we find that field, build the
bundled chip layout, and tune the bias so the trap bottom sits on B0.
"""

import numpy as np

from chipclock import STATE_0, magic_field, quadratic_coefficient, transition_frequency
from chipclock.constants import GAUSS, MICROMETER
from chipclock.fieldmap import bundled_layout
from chipclock.trapchar import calibrate_bias, find_minimum

# %%
# The clock transition near B0
# ----------------------------
# Around the magic field the transition frequency is a parabola,
# nu10(B) = nu10(B0) + beta (B - B0)^2.

b0 = magic_field()
beta = quadratic_coefficient()
print(f"B0 = {b0 / GAUSS:.5f} G, beta = {beta * GAUSS**2:.2f} Hz/G^2")
for offset_mG in (0, 1, 5, 10, 100):
    b = b0 + offset_mG * 1e-3 * GAUSS
    shift = transition_frequency(b) - transition_frequency(b0)
    print(f"  B0 + {offset_mG:3d} mG: shift {shift:12.6f} Hz, parabola {beta * (b - b0) ** 2:12.6f} Hz")

# %%
# Finding the trap
# ----------------
# The bundled layout combines a Z-shaped ribbon with two cross wires and a
# homogeneous bias. A local minimisation of |B| from a seed near 9 um above
# the surface finds the Ioffe trap.

layout = bundled_layout()
trap = find_minimum(layout, STATE_0, np.array([0, 0, 9]) * MICROMETER)
print(f"uncalibrated: |B_min| = {trap.b_min / GAUSS:.4f} G at d = {trap.distance_d / MICROMETER:.2f} um")
print("  frequencies", np.round(trap.frequencies, 1), "Hz")

# %%
# Calibrating to B0
# -----------------
# Tuning B_x moves the field at the trap bottom without moving the trap much.

layout, trap = calibrate_bias(layout, STATE_0, trap.minimum_position, "x")
print(f"calibrated:   |B_min| = {trap.b_min / GAUSS:.6f} G, B_x = {layout.bias[0] / GAUSS:.4f} G")
print("  frequencies", np.round(trap.frequencies, 1), "Hz")
print(f"  residual shift at the bottom: {beta * (trap.b_min - b0) ** 2:.2e} Hz")
