"""
Ramsey fringes and their decay
==============================

A thermal cloud sees a spread of clock shifts: a Zeeman part that grows
with each atom's energy and a collisional part that shrinks with it.
Averaging the single-atom Ramsey signal over that spread damps the
fringes, and a damped-sine fit recovers the coherence time.
"""

import numpy as np

from chipclock.coherence import PulseSequence, contrast, fit_damped_sine, ramsey_ensemble
from chipclock.constants import GAUSS, MICROKELVIN
from chipclock.ensemble import ShiftModel, assign_shifts, sample_thermal
from chipclock.hyperfine import magic_field
from chipclock.trapchar import harmonic_trap


def cloud(offset_mG, model):
    trap = harmonic_trap((50.0, 350.0, 410.0), magic_field() + offset_mG * 1e-3 * GAUSS)
    c = sample_thermal(trap, 0.6 * MICROKELVIN, 5000, seed=1, atom_count=1.5e4)
    return assign_shifts(c, None, model)


# %%
# Two opposing shifts
# -------------------
# At B0 both terms lower the shift of the coldest atoms, so they add.
# Placing the trap bottom below B0 reverses the Zeeman slope for low
# energies; near -60 mG it cancels much of the density term.

for offset in (0, -20, -40, -60, -80):
    zeeman = cloud(offset, ShiftModel(collisional_coefficient=0.0)).local_shift
    both = cloud(offset, ShiftModel()).local_shift
    print(f"B_min - B0 = {offset:4d} mG: shift std Zeeman only {zeeman.std():.3f} Hz, with collisions {both.std():.3f} Hz")

# %%
# Time-domain fringes
# -------------------
# Detune the drive by 6.4 Hz and scan the free-evolution time.

shifts = cloud(-60, ShiftModel()).local_shift
t = np.linspace(0, 1.5, 120)
run = ramsey_ensemble(shifts, PulseSequence(detuning_offset=6.4), "time", t, 1.5e4, detection_noise_atoms=100, seed=2)
fit = fit_damped_sine(t, run.n1)
print(f"fit: f = {fit.frequency:.3f} Hz, tau_c = {fit.decay_time:.2f} +- {fit.uncertainties['decay_time']:.2f} s")

# %%
# Contrast at fixed T_R
# ---------------------
# A frequency scan at fixed T_R gives the contrast directly.

scan = np.linspace(-4, 4, 161)
for t_r in (0.1, 0.3, 0.5):
    run = ramsey_ensemble(shifts, PulseSequence(ramsey_delay=t_r), "frequency", scan, 1.5e4)
    print(f"C(T_R = {t_r} s) = {contrast(scan, run.n1_clean, 1 / t_r).contrast:.3f}")
