"""Trapped-atom microwave clock on an atom chip: fields, traps, ensembles and clock operation."""

from .constants import CONSTANTS_TABLE_VERSION, RB87, PhysicalConstants
from .hyperfine import STATE_0, STATE_1, HyperfineState, magic_field, quadratic_coefficient, transition_frequency

__version__ = "0.1.0"
