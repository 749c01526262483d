"""87Rb 5S1/2 ground-state hyperfine structure in a static magnetic field.

Energies come from the closed-form Breit-Rabi formula. The 8x8 matrix
diagonalisation in :mod:`chipclock.mwnearfield` serves as an independent
cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .constants import GAUSS, RB87, PhysicalConstants

MAX_FIELD = 10.0  # T


@dataclass(frozen=True)
class HyperfineState:
    """A ground-state sublevel |F, m_F>."""

    f_quantum: int
    mf_quantum: int

    def __post_init__(self):
        if self.f_quantum not in (1, 2):
            raise ValueError(f"F must be 1 or 2 for 87Rb 5S1/2, got {self.f_quantum}")
        if abs(self.mf_quantum) > self.f_quantum:
            raise ValueError(f"|m_F| must be <= F, got m_F={self.mf_quantum}")

    @property
    def g_factor(self) -> float:
        """Low-field Lande factor with g_J = 2, g_I = 0 (+1/2 for F=2, -1/2 for F=1)."""
        return 0.5 if self.f_quantum == 2 else -0.5

    @property
    def moment(self) -> float:
        """m_F g_F, the linear Zeeman moment in units of mu_B."""
        return self.mf_quantum * self.g_factor

    @property
    def trappable(self) -> bool:
        return self.moment > 0

    def __str__(self):
        return f"|F={self.f_quantum}, mF={self.mf_quantum:+d}>"


STATE_0 = HyperfineState(1, -1)
STATE_1 = HyperfineState(2, 1)

ALL_STATES = tuple(HyperfineState(1, m) for m in (-1, 0, 1)) + tuple(
    HyperfineState(2, m) for m in (-2, -1, 0, 1, 2)
)


def _check_field(b):
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("field magnitude must be non-negative")
    if np.any(b >= MAX_FIELD):
        raise ValueError(f"field magnitude must be below {MAX_FIELD} T")
    return b


@dataclass(frozen=True)
class BreitRabiModel:
    constants: PhysicalConstants = field(default=RB87)
    nuclear_spin: Fraction = Fraction(3, 2)

    @property
    def _x_per_tesla(self) -> float:
        c = self.constants
        return (
            (c.electron_g_factor - c.nuclear_g_factor)
            * c.bohr_magneton
            / (c.planck * c.hyperfine_splitting)
        )

    def _zeeman_part(self, state: HyperfineState, b):
        c = self.constants
        nu = c.hyperfine_splitting
        two_i1 = float(2 * self.nuclear_spin + 1)
        m = state.mf_quantum
        x = self._x_per_tesla * b
        linear = c.nuclear_g_factor * c.bohr_hz_per_tesla * m * b
        if abs(m) == self.nuclear_spin + Fraction(1, 2):
            # stretched states: sqrt((1 +- x)^2) continued analytically through x=1
            root_m1 = np.sign(m) * x
        else:
            u = 4 * m * x / two_i1 + x**2
            root_m1 = u / (np.sqrt(1 + u) + 1)
        sign = 1.0 if state.f_quantum == 2 else -1.0
        return linear + sign * 0.5 * nu * root_m1

    def _zero_field_energy(self, state: HyperfineState) -> float:
        nu = self.constants.hyperfine_splitting
        two_i1 = float(2 * self.nuclear_spin + 1)
        sign = 1.0 if state.f_quantum == 2 else -1.0
        return -nu / (2 * two_i1) + sign * 0.5 * nu

    def state_energy(self, state: HyperfineState, b_magnitude):
        """Energy E/h in Hz of ``state`` at field ``b_magnitude`` (tesla).

        The zero of energy is the hyperfine centroid, so F=2 sits at
        +3/8 and F=1 at -5/8 of the splitting at zero field.
        """
        b = _check_field(b_magnitude)
        return self._zero_field_energy(state) + self._zeeman_part(state, b)

    def state_energy_derivative(self, state: HyperfineState, b_magnitude):
        """dE/dB of :meth:`state_energy` in Hz/T."""
        b = _check_field(b_magnitude)
        c = self.constants
        nu = c.hyperfine_splitting
        two_i1 = float(2 * self.nuclear_spin + 1)
        m = state.mf_quantum
        k = self._x_per_tesla
        x = k * b
        linear = c.nuclear_g_factor * c.bohr_hz_per_tesla * m
        if abs(m) == self.nuclear_spin + Fraction(1, 2):
            droot = np.sign(m) * k * np.ones_like(x)
        else:
            root = np.sqrt(1 + 4 * m * x / two_i1 + x**2)
            droot = (2 * m / two_i1 + x) * k / root
        sign = 1.0 if state.f_quantum == 2 else -1.0
        return linear + sign * 0.5 * nu * droot

    def transition_frequency(self, b_magnitude, upper=STATE_1, lower=STATE_0):
        """nu_10(B) = E(|1>) - E(|0>) in Hz."""
        return self._zero_field_energy(upper) - self._zero_field_energy(
            lower
        ) + self.transition_shift(b_magnitude, upper, lower)

    def transition_shift(self, b_magnitude, upper=STATE_1, lower=STATE_0):
        """nu_10(B) - nu_10(0) in Hz, free of cancellation error."""
        b = _check_field(b_magnitude)
        return self._zeeman_part(upper, b) - self._zeeman_part(lower, b)

    def transition_derivative(self, b_magnitude, upper=STATE_1, lower=STATE_0):
        return self.state_energy_derivative(upper, b_magnitude) - self.state_energy_derivative(
            lower, b_magnitude
        )

    @cached_property
    def _magic_field(self) -> float:
        lo, hi = 1e-3 * GAUSS, 10 * GAUSS
        f_lo, f_hi = self.transition_derivative(lo), self.transition_derivative(hi)
        if np.sign(f_lo) == np.sign(f_hi):
            raise RuntimeError(
                "magic field not bracketed in (0, 10 G); check the constants "
                f"(dnu/dB = {f_lo:.4g} and {f_hi:.4g} Hz/T at the ends)"
            )
        return brentq(self.transition_derivative, lo, hi, xtol=1e-16, rtol=1e-15)

    def magic_field(self) -> float:
        """Field (T) where the |0>-|1> transition has zero first-order Zeeman shift."""
        return self._magic_field

    @cached_property
    def _quadratic_coefficient(self) -> float:
        b0 = self.magic_field()
        step = 1e-3 * GAUSS
        f = self.transition_shift
        return 0.5 * (f(b0 + step) - 2 * f(b0) + f(b0 - step)) / step**2

    def quadratic_coefficient(self) -> float:
        """Curvature beta (Hz/T^2) with nu_10(B) ~ nu_10(B0) + beta (B - B0)^2."""
        return self._quadratic_coefficient

    def residual_shift(self, b_magnitude):
        """Exact nu_10(B) - nu_10(B0) in Hz."""
        return self.transition_shift(b_magnitude) - self.transition_shift(self.magic_field())


DEFAULT_MODEL = BreitRabiModel()


def state_energy(state, b_magnitude, model=DEFAULT_MODEL):
    return model.state_energy(state, b_magnitude)


def transition_frequency(b_magnitude, model=DEFAULT_MODEL):
    return model.transition_frequency(b_magnitude)


def magic_field(model=DEFAULT_MODEL) -> float:
    return model.magic_field()


def quadratic_coefficient(model=DEFAULT_MODEL) -> float:
    return model.quadratic_coefficient()


def hz_per_gauss2(beta: float) -> float:
    """Convert a curvature from Hz/T^2 to Hz/G^2."""
    return beta * GAUSS**2
