import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chipclock import constants as C
from chipclock.hyperfine import (
    ALL_STATES,
    STATE_0,
    STATE_1,
    BreitRabiModel,
    HyperfineState,
    hz_per_gauss2,
    magic_field,
    quadratic_coefficient,
    state_energy,
    transition_frequency,
)
from chipclock.mwnearfield import eigensystem

G = C.GAUSS

# Frozen from tests/oracles/breit_rabi_mp.py (50-digit arithmetic, independent code).
ORACLE_B0_G = 3.22891695898624
ORACLE_BETA_HZ_G2 = 431.359773795547
ORACLE_NU10_B0 = 6834678113.58557453
ORACLE_SHIFT_1G = 431.359836935254
ORACLE_B0_GI_PLUS_1PCT_G = 3.26117371472027


# --- constants -----------------------------------------------------------------


def test_constants_validation():
    with pytest.raises(ValueError):
        C.RB87.replace(planck=-1.0)
    with pytest.raises(ValueError):
        C.RB87.replace(nuclear_g_factor=1e-3)
    with pytest.raises(ValueError):
        C.RB87.replace(hyperfine_splitting=6.8346e9)


def test_constants_table_roundtrip(tmp_path):
    path = C.write_constants_table(tmp_path / "c.txt")
    text = path.read_text()
    assert C.CONSTANTS_TABLE_VERSION in text
    assert C.read_constants_table(path) == C.RB87


def test_bundled_constants_table_matches_code():
    from importlib.resources import files

    table = files("chipclock") / "data" / "constants_rb87.txt"
    assert C.read_constants_table(table) == C.RB87


def test_moment_ratio_exposed():
    # reported, not asserted against the quoted 10^6
    assert C.RB87.moment_ratio_squared > 1e6


# --- states ----------------------------------------------------------------------


def test_state_validation():
    with pytest.raises(ValueError):
        HyperfineState(3, 0)
    with pytest.raises(ValueError):
        HyperfineState(1, 2)
    assert STATE_0 == HyperfineState(1, -1)
    assert STATE_1 == HyperfineState(2, 1)


def test_qubit_states_are_trappable_with_equal_moment():
    assert STATE_0.trappable and STATE_1.trappable
    assert STATE_0.moment == STATE_1.moment == 0.5


# --- energies ------------------------------------------------------------------------


def test_zero_field_splitting():
    nu = C.RB87.hyperfine_splitting
    assert state_energy(HyperfineState(2, 0), 0.0) - state_energy(HyperfineState(1, 0), 0.0) == pytest.approx(
        nu, rel=1e-15
    )
    assert transition_frequency(0.0) == pytest.approx(nu, rel=1e-15)


def test_rejects_bad_fields():
    with pytest.raises(ValueError):
        state_energy(STATE_0, -1e-6)
    with pytest.raises(ValueError):
        state_energy(STATE_0, 10.0)


def test_magic_field_against_oracle():
    assert magic_field() / G == pytest.approx(ORACLE_B0_G, rel=1e-9)
    assert abs(magic_field() / G - 3.23) < 0.01  # "B0 ~ 3.23 G"


def test_magic_field_is_root_of_derivative():
    model = BreitRabiModel()
    assert abs(model.transition_derivative(magic_field())) * G < 1e-3


def test_equal_first_derivatives_at_magic_field():
    b0 = ORACLE_B0_G * G
    h = 1e-6 * G
    d0 = (state_energy(STATE_0, b0 + h) - state_energy(STATE_0, b0 - h)) / (2 * h)
    d1 = (state_energy(STATE_1, b0 + h) - state_energy(STATE_1, b0 - h)) / (2 * h)
    assert d1 == pytest.approx(d0, rel=1e-3)


def test_quadratic_coefficient_against_oracle():
    beta = hz_per_gauss2(quadratic_coefficient())
    assert beta == pytest.approx(ORACLE_BETA_HZ_G2, rel=1e-5)
    assert beta == pytest.approx(431, rel=0.01)
    assert quadratic_coefficient() > 0


def test_quadratic_coefficient_against_polynomial_fit():
    b0 = magic_field()
    db = np.linspace(-20e-3, 20e-3, 41) * G
    nu = np.array([transition_frequency(b0 + d) for d in db]) - transition_frequency(b0)
    coef = np.polyfit(db / G, nu, 4)
    assert coef[-3] == pytest.approx(hz_per_gauss2(quadratic_coefficient()), rel=1e-4)


def test_one_gauss_above_magic_field():
    b0 = magic_field()
    shift = transition_frequency(b0 + G) - transition_frequency(b0)
    assert shift == pytest.approx(ORACLE_SHIFT_1G, rel=1e-6)
    assert transition_frequency(b0) == pytest.approx(ORACLE_NU10_B0, rel=1e-13)


def test_small_offset_follows_beta():
    b0 = magic_field()
    d = 10e-3 * G
    shift = transition_frequency(b0 + d) - transition_frequency(b0)
    assert shift == pytest.approx(quadratic_coefficient() * d**2, rel=0.01)


def test_magic_field_sensitivity_to_nuclear_g():
    model = BreitRabiModel(C.RB87.replace(nuclear_g_factor=C.RB87.nuclear_g_factor * 1.01))
    # g_I more negative pushes the F=1 and F=2 linear terms apart: B0 grows
    assert magic_field(model) / G == pytest.approx(ORACLE_B0_GI_PLUS_1PCT_G, rel=1e-9)
    assert magic_field(model) > magic_field()


def test_nu10_global_minimum_on_grid():
    b0 = magic_field()
    grid = np.linspace(0, 10 * G, 10_000)
    shift = BreitRabiModel().residual_shift(grid)
    assert np.all(shift >= -1e-9)
    assert np.argmin(shift) in (np.searchsorted(grid, b0) - 1, np.searchsorted(grid, b0))


@given(st.floats(min_value=1e-4, max_value=50e-3))
def test_residual_shift_even_in_offset(delta_g):
    model = BreitRabiModel()
    b0 = magic_field()
    d = delta_g * G
    up, down = model.residual_shift(b0 + d), model.residual_shift(b0 - d)
    assert abs(up - down) < 1e-3 * up


@given(st.floats(min_value=0.0, max_value=10 * G * 0.9999))
def test_breit_rabi_matches_eight_level_diagonalisation(b):
    system = eigensystem(b)
    scale = C.RB87.hyperfine_splitting
    for state in ALL_STATES:
        assert abs(system.energy(state) - state_energy(state, b)) < 1e-12 * scale


def test_breit_rabi_matches_eight_level_at_100_random_fields():
    rng = np.random.default_rng(0)
    scale = C.RB87.hyperfine_splitting
    for b in rng.uniform(0, 10 * G, 100):
        system = eigensystem(b)
        err = max(abs(system.energy(s) - state_energy(s, b)) for s in ALL_STATES)
        assert err < 1e-12 * scale
