"""Physical constants and unit conversions.

All library code works in SI units; energies are expressed as E/h in Hz.
The reference values below are CODATA 2018 and the standard 87Rb
D-line data tables.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

CONSTANTS_TABLE_VERSION = "rb87-codata2018-v1"

# conversions at the config boundary
GAUSS = 1e-4  # T
MILLIGAUSS = 1e-7  # T
MICROMETER = 1e-6  # m
MILLIAMPERE = 1e-3  # A
MICROKELVIN = 1e-6  # K
CM3 = 1e-6  # m^3


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants needed for the 87Rb ground-state and trap calculations."""

    bohr_magneton: float = 9.2740100783e-24  # J/T
    planck: float = 6.62607015e-34  # J s
    boltzmann: float = 1.380649e-23  # J/K
    rb87_mass: float = 1.44316064800e-25  # kg
    vacuum_permeability: float = 1.25663706212e-06  # T m/A
    hyperfine_splitting: float = 6.83468261090e09  # Hz
    electron_g_factor: float = 2.00233113000  # g_J of 5S1/2
    nuclear_g_factor: float = -9.95141400000e-04  # g_I
    gravity: float = 9.80665000000  # m/s^2

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if field.name == "nuclear_g_factor":
                if value >= 0:
                    raise ValueError("nuclear_g_factor must be negative for 87Rb")
            elif not value > 0:
                raise ValueError(f"{field.name} must be positive, got {value!r}")
        if abs(self.hyperfine_splitting - 6.834682611e9) > 1e3:
            raise ValueError(
                "hyperfine_splitting must lie within 1 kHz of 6.834682611 GHz"
            )

    @property
    def hbar(self) -> float:
        return self.planck / (2 * 3.141592653589793)

    @property
    def bohr_hz_per_tesla(self) -> float:
        """mu_B / h in Hz/T (about 1.3996 MHz/G)."""
        return self.bohr_magneton / self.planck

    @property
    def moment_ratio_squared(self) -> float:
        """(g_J / g_I)^2, the magnetic-noise suppression factor of the clock pair."""
        return (self.electron_g_factor / self.nuclear_g_factor) ** 2

    def replace(self, **changes) -> "PhysicalConstants":
        return dataclasses.replace(self, **changes)


RB87 = PhysicalConstants()

_UNITS = {
    "bohr_magneton": "J/T",
    "planck": "J s",
    "boltzmann": "J/K",
    "rb87_mass": "kg",
    "vacuum_permeability": "T m/A",
    "hyperfine_splitting": "Hz",
    "electron_g_factor": "1",
    "nuclear_g_factor": "1",
    "gravity": "m/s^2",
}


def format_constants_table(constants: PhysicalConstants = RB87) -> str:
    """Render the constants as a ``key = value  # unit`` text table."""
    lines = [f"# chipclock constants table, version {CONSTANTS_TABLE_VERSION}"]
    for field in dataclasses.fields(constants):
        value = getattr(constants, field.name)
        lines.append(f"{field.name} = {value!r}  # {_UNITS[field.name]}")
    return "\n".join(lines) + "\n"


def write_constants_table(path, constants: PhysicalConstants = RB87) -> Path:
    path = Path(path)
    path.write_text(format_constants_table(constants))
    return path


def read_constants_table(path) -> PhysicalConstants:
    """Parse a table written by :func:`write_constants_table`."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = float(value)
    return PhysicalConstants(**values)
