"""Thermal ensembles in a harmonic trap and per-atom clock shifts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import i0e

from .constants import CM3, GAUSS, RB87, PhysicalConstants
from .fieldmap import ChipLayout, field_magnitude
from .hyperfine import magic_field, quadratic_coefficient
from .trapchar import TrapAnalysis

# Order of magnitude reported for cold 87Rb |1,-1>/|2,1> collisions; a
# configurable default, not a measured property of any particular cloud.
DEFAULT_COLLISIONAL_COEFFICIENT = -5.0e-13 * CM3  # Hz m^3
UNCALIBRATED_LIMIT = 50e-3 * GAUSS  # |B_min - B0| that triggers a warning

FROZEN = "frozen"
TRAJECTORY = "trajectory"


def thermal_widths(frequencies, temperature, constants: PhysicalConstants = RB87):
    """Gaussian rms cloud size sigma_i = sqrt(kT/m) / (2 pi f_i) per axis (m)."""
    f = np.asarray(frequencies, dtype=float)
    if np.any(~(f > 0)):
        raise ValueError(f"trap frequencies must be positive, got {f}")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    v = np.sqrt(constants.boltzmann * temperature / constants.rb87_mass)
    return v / (2 * np.pi * f)


def peak_density(atom_count, temperature, trap, constants: PhysicalConstants = RB87) -> float:
    """n0 = N prod_i 1/(sqrt(2 pi) sigma_i), in m^-3.

    ``trap`` is a :class:`TrapAnalysis` or a sequence of three frequencies.
    """
    if not atom_count >= 1:
        raise ValueError("atom_count must be >= 1")
    freqs = trap.frequencies if isinstance(trap, TrapAnalysis) else trap
    sigma = thermal_widths(freqs, temperature, constants)
    return float(atom_count / np.prod(np.sqrt(2 * np.pi) * sigma))


def gaussian_density(points, trap: TrapAnalysis, atom_count, temperature, constants=RB87):
    """Thermal density n(r) in m^-3 at ``points`` (..., 3)."""
    sigma = thermal_widths(trap.frequencies, temperature, constants)
    local = (np.asarray(points, dtype=float) - trap.minimum_position) @ trap.principal_axes
    n0 = peak_density(atom_count, temperature, trap.frequencies, constants)
    return n0 * np.exp(-0.5 * np.sum((local / sigma) ** 2, axis=-1))


@dataclass(frozen=True)
class ShiftModel:
    """How per-atom shifts of the clock transition are computed.

    ``beta`` and ``b0`` default to the Breit-Rabi values. The collisional
    coefficient multiplies the density seen by the atom.
    """

    beta: float | None = None  # Hz/T^2
    b0: float | None = None  # T
    collisional_coefficient: float = DEFAULT_COLLISIONAL_COEFFICIENT  # Hz m^3
    averaging_mode: str = TRAJECTORY

    def __post_init__(self):
        if self.averaging_mode not in (FROZEN, TRAJECTORY):
            raise ValueError(f"averaging_mode must be {FROZEN!r} or {TRAJECTORY!r}")

    @property
    def beta_value(self) -> float:
        return quadratic_coefficient() if self.beta is None else self.beta

    @property
    def b0_value(self) -> float:
        return magic_field() if self.b0 is None else self.b0


@dataclass
class ThermalEnsemble:
    atom_count: float
    temperature: float  # K
    trap: TrapAnalysis
    positions: np.ndarray  # (n, 3) m
    velocities: np.ndarray  # (n, 3) m/s
    rng_seed: int | None = None
    local_shift: np.ndarray | None = None  # Hz
    metadata: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.positions)

    @property
    def local_coordinates(self) -> np.ndarray:
        """Positions relative to the minimum along the principal axes."""
        return (self.positions - self.trap.minimum_position) @ self.trap.principal_axes

    def axis_energies(self, constants: PhysicalConstants = RB87) -> np.ndarray:
        """Energy per principal axis, (n, 3) in J."""
        omega = 2 * np.pi * self.trap.frequencies
        m = constants.rb87_mass
        v_local = self.velocities @ self.trap.principal_axes
        return 0.5 * m * (omega**2 * self.local_coordinates**2 + v_local**2)

    @property
    def peak_density(self) -> float:
        return peak_density(self.atom_count, self.temperature, self.trap)

    def summary(self) -> dict:
        out = {
            "atom_count": self.atom_count,
            "temperature_uK": self.temperature * 1e6,
            "n_samples": self.n_samples,
            "peak_density_cm3": self.peak_density * CM3,
        }
        if self.local_shift is not None:
            out["shift_mean_Hz"] = float(np.mean(self.local_shift))
            out["shift_std_Hz"] = float(np.std(self.local_shift))
        out.update(self.metadata)
        return out


def sample_thermal(
    trap: TrapAnalysis,
    temperature: float,
    n_samples: int,
    seed: int | None = None,
    atom_count: float | None = None,
    constants: PhysicalConstants = RB87,
) -> ThermalEnsemble:
    """Draw Boltzmann positions and velocities in the harmonic approximation.

    Each principal axis is sampled independently. ``atom_count`` (the
    physical N) defaults to ``n_samples``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sigma = thermal_widths(trap.frequencies, temperature, constants)
    v_rms = np.sqrt(constants.boltzmann * temperature / constants.rb87_mass)
    rng = np.random.default_rng(seed)
    local = rng.standard_normal((n_samples, 3)) * sigma
    v_local = rng.standard_normal((n_samples, 3)) * v_rms
    axes = trap.principal_axes
    return ThermalEnsemble(
        atom_count=float(n_samples if atom_count is None else atom_count),
        temperature=float(temperature),
        trap=trap,
        positions=trap.minimum_position + local @ axes.T,
        velocities=v_local @ axes.T,
        rng_seed=seed,
    )


def _orbit_averaged(ensemble: ThermalEnsemble, model: ShiftModel, constants):
    """Harmonic-orbit averages of the Zeeman and density terms per atom.

    Along each axis V_i = E_i sin^2(phase), so <V_i> = E_i/2 and
    <V_i^2> = 3 E_i^2 / 8. The trap potential is mu (|B| - B_min).
    """
    energies = ensemble.axis_energies(constants)
    mu = ensemble.trap.state.moment * constants.bohr_magneton
    offset = ensemble.trap.b_min - model.b0_value
    mean_v = 0.5 * energies.sum(axis=1)
    total = energies.sum(axis=1)
    mean_v2 = 0.25 * (total**2 - np.sum(energies**2, axis=1)) + 0.375 * np.sum(energies**2, axis=1)
    zeeman = model.beta_value * (offset**2 + 2 * offset * mean_v / mu + mean_v2 / mu**2)
    # <exp(-E sin^2 / kT)> = exp(-E/2kT) I0(E/2kT)
    x = energies / (2 * constants.boltzmann * ensemble.temperature)
    density = ensemble.peak_density * np.prod(i0e(x), axis=1)
    return zeeman, density


def assign_shifts(
    ensemble: ThermalEnsemble,
    layout: ChipLayout | None,
    model: ShiftModel = ShiftModel(),
    constants: PhysicalConstants = RB87,
) -> ThermalEnsemble:
    """Return a copy of ``ensemble`` with ``local_shift`` filled in (Hz).

    With ``layout=None`` the frozen mode uses the harmonic expansion of
    |B| stored in the trap analysis.
    """
    metadata = dict(ensemble.metadata, averaging_mode=model.averaging_mode)
    miscalibration = ensemble.trap.b_min - model.b0_value
    if abs(miscalibration) > UNCALIBRATED_LIMIT:
        metadata["warning"] = (
            f"trap not calibrated: |B_min| - B0 = {miscalibration / GAUSS * 1e3:.1f} mG"
        )
    if model.averaging_mode == FROZEN:
        if layout is None:
            # harmonic expansion of |B| about the minimum
            r = ensemble.positions - ensemble.trap.minimum_position
            b = ensemble.trap.b_min + 0.5 * np.einsum("ni,ij,nj->n", r, ensemble.trap.hessian, r)
        else:
            b = field_magnitude(layout, ensemble.positions)
        zeeman = model.beta_value * (b - model.b0_value) ** 2
        density = gaussian_density(
            ensemble.positions, ensemble.trap, ensemble.atom_count, ensemble.temperature, constants
        )
    else:
        zeeman, density = _orbit_averaged(ensemble, model, constants)
    shift = zeeman + model.collisional_coefficient * density
    return replace(ensemble, local_shift=shift, metadata=metadata)
