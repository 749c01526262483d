import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chipclock.constants import GAUSS, MICROMETER, RB87
from chipclock.fieldmap import ChipLayout, WireSegment, bundled_layout, field_magnitude, magnitude_hessian
from chipclock.hyperfine import STATE_0, STATE_1, HyperfineState, magic_field, quadratic_coefficient
from chipclock.trapchar import (
    TrapError,
    calibrate_bias,
    find_minimum,
    harmonic_trap,
    place_at_distance,
    potential_slice,
    trap_frequencies,
)

MU0 = RB87.vacuum_permeability
I_GUIDE = 0.5
B_GUIDE = 5.5 * GAUSS
R0 = MU0 * I_GUIDE / (2 * np.pi * B_GUIDE)


def side_guide(axial=1.0 * GAUSS, bias_y=B_GUIDE):
    # 2 m wire along x at z = 0; +B_y is cancelled at +z
    return ChipLayout(segments=[WireSegment([-1, 0, 0], [1, 0, 0], I_GUIDE)], bias=[axial, bias_y, 0])


def z_trap(axial=1.0 * GAUSS, bias_y=B_GUIDE, half_length=10e-3):
    # long Z wire: the side guide plus weak axial confinement from the end legs
    L = half_length
    segs = [
        WireSegment([-L, -1, 0], [-L, 0, 0], I_GUIDE),
        WireSegment([-L, 0, 0], [L, 0, 0], I_GUIDE),
        WireSegment([L, 0, 0], [L, 1, 0], I_GUIDE),
    ]
    return ChipLayout(segments=segs, bias=[axial, bias_y, 0])


def radial_frequency(axial, bias_y=B_GUIDE, current=I_GUIDE):
    gradient = 2 * np.pi * bias_y**2 / (MU0 * current)
    curvature = gradient**2 / axial
    return np.sqrt(curvature * 0.5 * RB87.bohr_magneton / RB87.rb87_mass) / (2 * np.pi)


@pytest.fixture(scope="module")
def bundled_trap():
    layout = bundled_layout()
    return layout, find_minimum(layout, STATE_0, np.array([0, 0, 9]) * MICROMETER)


@pytest.fixture(scope="module")
def calibrated(bundled_trap):
    layout, analysis = bundled_trap
    return calibrate_bias(layout, STATE_0, analysis.minimum_position, "x")


def test_frequency_formula():
    hess = np.diag([3.0, 1.0, 2.0]) * 1e5
    freqs, axes = trap_frequencies(hess, STATE_0)
    expected = np.sqrt(np.array([1.0, 2.0, 3.0]) * 1e5 * 0.5 * RB87.bohr_magneton / RB87.rb87_mass) / (2 * np.pi)
    assert np.allclose(freqs, expected, rtol=1e-12)
    assert np.allclose(np.abs(axes), np.eye(3)[:, [1, 2, 0]])


@given(st.lists(st.floats(5.0, 2000.0), min_size=3, max_size=3))
def test_harmonic_trap_frequencies_roundtrip(freqs):
    trap = harmonic_trap(freqs, magic_field())
    back, _ = trap_frequencies(trap.hessian, STATE_0)
    assert np.allclose(back, np.sort(freqs), rtol=1e-10)


def test_side_guide_radial_frequencies_closed_form():
    # the infinite guide has a flat axis, so evaluate the Hessian at the analytic minimum
    hess = magnitude_hessian(side_guide(), np.array([0, 0, R0]))
    freqs, _ = trap_frequencies(hess, STATE_0)
    assert np.allclose(freqs[1:], radial_frequency(GAUSS), rtol=1e-6)
    assert abs(freqs[0]) < 1e-3 * freqs[1]


def test_side_guide_flat_axis_is_not_accepted_as_trap():
    with pytest.raises(TrapError, match="saddle"):
        find_minimum(side_guide(), STATE_0, [0, 0, 1.1 * R0])


def test_z_trap_minimum_at_side_guide_radius():
    a = find_minimum(z_trap(), STATE_0, [0, 0, 1.1 * R0])
    assert a.minimum_position[2] == pytest.approx(R0, rel=1e-3)
    assert np.allclose(a.frequencies[1:], radial_frequency(GAUSS), rtol=1e-3)
    assert a.gradient_norm < 1e-8


def test_minimum_invariants(calibrated):
    layout, a = calibrated
    assert a.gradient_norm < 1e-8
    assert np.all(np.diff(a.frequencies) >= 0) and np.all(a.frequencies > 0)
    assert a.distance_dw == a.distance_d + layout.wire_depth
    assert np.allclose(a.principal_axes.T @ a.principal_axes, np.eye(3), atol=1e-12)


def test_bundled_layout_is_ioffe_trap_near_9um(bundled_trap):
    _, a = bundled_trap
    assert 6 * MICROMETER < a.distance_d < 13 * MICROMETER
    assert a.b_min > 0.5 * GAUSS
    ratio = a.frequencies / np.array([50.0, 350.0, 410.0])
    assert np.all((ratio > 1 / 3) & (ratio < 3))


def test_calibration_reaches_magic_field(calibrated):
    _, a = calibrated
    assert abs(a.b_min - magic_field()) < 1e-4 * GAUSS
    assert quadratic_coefficient() * (a.b_min - magic_field()) ** 2 < 10e-6


def test_calibration_is_idempotent(calibrated):
    layout, a = calibrated
    again, _ = calibrate_bias(layout, STATE_0, a.minimum_position, "x")
    assert abs(again.bias[0] - layout.bias[0]) < 1e-6 * GAUSS


def test_guide_calibration_sets_axial_field_to_b0():
    # the Z legs add an axial field of relative size ~ (r0 / L)^2
    layout, a = calibrate_bias(z_trap(), STATE_0, [0, 0, R0], "x")
    assert abs(layout.bias[0]) == pytest.approx(magic_field(), rel=1e-3)
    assert abs(a.b_min - magic_field()) < 1e-4 * GAUSS


def test_hessian_matches_stencil_fit(calibrated):
    layout, a = calibrated
    h = 0.2 * MICROMETER
    for k in range(3):
        axis = a.principal_axes[:, k]
        offsets = np.arange(-2, 3) * h
        values = field_magnitude(layout, a.minimum_position + offsets[:, None] * axis)
        curvature = 2 * np.polyfit(offsets, values, 2)[0]
        f = np.sqrt(curvature * 0.5 * RB87.bohr_magneton / RB87.rb87_mass) / (2 * np.pi)
        assert f == pytest.approx(a.frequencies[k], rel=1e-3)


def test_qubit_states_share_the_trap(calibrated):
    layout, a0 = calibrated
    a1 = find_minimum(layout, STATE_1, a0.minimum_position)
    assert np.allclose(a1.minimum_position, a0.minimum_position, rtol=0, atol=1e-12)
    assert np.allclose(a1.frequencies, a0.frequencies, rtol=1e-12)


def test_untrappable_state_rejected():
    with pytest.raises(TrapError):
        find_minimum(z_trap(), HyperfineState(2, -1), [0, 0, R0])


def test_quadrupole_without_ioffe_field_rejected():
    with pytest.raises(TrapError):
        find_minimum(side_guide(axial=0.0), STATE_0, [0, 0, 1.05 * R0])


def test_potential_slice_minimum_at_centre(calibrated):
    layout, a = calibrated
    offsets, energy = potential_slice(layout, a, a.principal_axes[:, 0], 10 * MICROMETER, 41)
    assert np.argmin(energy) == 20


def test_place_side_guide_inverts_closed_form():
    target = 100 * MICROMETER
    layout, a = place_at_distance(z_trap(), target, "bias:y", (1e-4, 2e-3), seed=[0, 0, R0])
    assert a.distance_d == pytest.approx(target, abs=0.05 * MICROMETER)
    assert layout.bias[1] == pytest.approx(MU0 * I_GUIDE / (2 * np.pi * target), rel=1e-3)
    assert abs(a.b_min - magic_field()) < 1e-4 * GAUSS


def test_place_rejects_zero_distance():
    with pytest.raises(ValueError):
        place_at_distance(z_trap(), 0.0, "bias:y", (1e-4, 2e-3), seed=[0, 0, R0])


def test_place_unreachable_distance():
    with pytest.raises(TrapError):
        place_at_distance(z_trap(), 20 * MICROMETER, "bias:y", (1e-4, 2e-3), seed=[0, 0, R0])


@pytest.mark.slow
@pytest.mark.parametrize("target_um", [5, 9, 22, 54, 132])
def test_bundled_layout_reaches_target_distances(calibrated, target_um):
    layout, a = calibrated
    placed, b = place_at_distance(layout, target_um * MICROMETER, "current:I1", (0.02, 1.0), seed=a.minimum_position)
    assert b.distance_d == pytest.approx(target_um * MICROMETER, abs=0.05 * MICROMETER)
    assert abs(b.b_min - magic_field()) < 1e-4 * GAUSS
    assert np.all(b.frequencies > 0)
