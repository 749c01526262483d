"""Trap minima, trap frequencies, bias calibration and distance placement."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize

from .constants import GAUSS, MICROMETER, RB87
from .fieldmap import (
    ChipLayout,
    SingularityError,
    as_vec3,
    field_magnitude,
    field_vector,
    layout_from_dict,
    magnitude_gradient,
    magnitude_hessian,
)
from .hyperfine import STATE_0, HyperfineState

GRADIENT_TOLERANCE = 1e-8  # T/m
MAX_ITERATIONS = 10_000
AXES = {"x": 0, "y": 1, "z": 2}


class TrapError(RuntimeError):
    """Minimisation failed, or the stationary point is not a trap."""


class CalibrationError(RuntimeError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class TrapAnalysis:
    minimum_position: np.ndarray  # m
    b_min: float  # T
    frequencies: np.ndarray  # Hz, ascending
    principal_axes: np.ndarray  # columns are unit vectors
    distance_d: float  # m, atom-surface
    distance_dw: float  # m, atom-wire (d + h_e)
    hessian: np.ndarray  # T/m^2, of |B|
    gradient_norm: float  # T/m, of the effective potential
    iterations: int
    state: HyperfineState = STATE_0
    gravity_on: bool = False


def _effective_potential(layout, state, gravity_on, constants):
    """Potential divided by m_F g_F mu_B, in tesla, with its gradient."""
    mu = state.moment * constants.bohr_magneton
    if gravity_on:
        weight = constants.rb87_mass * constants.gravity / mu
        g_dir = layout.gravity_direction
    else:
        weight = 0.0
        g_dir = np.zeros(3)

    def value(p):
        return field_magnitude(layout, p) - weight * (np.asarray(p) @ g_dir)

    def gradient(p):
        return magnitude_gradient(layout, p) - weight * g_dir

    return value, gradient


def trap_frequencies(hessian, state=STATE_0, constants=RB87):
    """Eigen-frequencies (Hz) and axes from the Hessian of |B| (T/m^2)."""
    eigvals, eigvecs = np.linalg.eigh(0.5 * (hessian + hessian.T))
    mu = state.moment * constants.bohr_magneton
    curv = eigvals * mu / constants.rb87_mass
    freqs = np.sign(curv) * np.sqrt(np.abs(curv)) / (2 * np.pi)
    return freqs, eigvecs


def find_minimum(
    layout: ChipLayout,
    state: HyperfineState = STATE_0,
    seed=None,
    gravity_on: bool = False,
    constants=RB87,
    search_box=None,
) -> TrapAnalysis:
    """Locate the local minimum of the trapping potential near ``seed``.

    A trust-region Newton search runs in micrometre units and is then
    polished with plain Newton steps until the gradient of the effective
    potential (in T/m) drops below ``GRADIENT_TOLERANCE``.
    """
    if not state.trappable:
        raise TrapError(f"{state} is not a weak-field seeker")
    if seed is None:
        seed = scan_seed(layout, search_box, state=state, gravity_on=gravity_on)
    seed = as_vec3(seed)
    value, gradient = _effective_potential(layout, state, gravity_on, constants)

    scale = MICROMETER

    def f(u):
        return value(u * scale) / GAUSS

    def g(u):
        return gradient(u * scale) * scale / GAUSS

    def h(u):
        return magnitude_hessian(layout, u * scale) * scale**2 / GAUSS

    try:
        result = minimize(
            f,
            seed / scale,
            jac=g,
            hess=h,
            method="trust-exact",
            options={"gtol": 1e-12, "maxiter": 2000},
        )
    except SingularityError as exc:
        raise TrapError(f"minimisation ran into a wire: {exc}") from exc
    u = result.x
    iterations = int(result.nit)

    p = u * scale
    grad = gradient(p)
    while np.linalg.norm(grad) >= GRADIENT_TOLERANCE:
        if iterations >= MAX_ITERATIONS:
            raise TrapError(
                f"no convergence after {iterations} iterations, |grad| = {np.linalg.norm(grad):.3e} T/m"
            )
        hess = magnitude_hessian(layout, p)
        step = np.linalg.solve(hess, grad)
        # plain Newton is only trusted close to the minimum
        if np.linalg.norm(step) > MICROMETER:
            step *= MICROMETER / np.linalg.norm(step)
        p = p - step
        grad = gradient(p)
        iterations += 1

    hess = magnitude_hessian(layout, p)
    b_min = float(field_magnitude(layout, p))
    if b_min < 1e-9:
        raise TrapError("field vanishes at the minimum (quadrupole, no Ioffe field)")
    freqs, axes = trap_frequencies(hess, state, constants)
    if np.any(freqs <= 0):
        raise TrapError(
            f"stationary point at {p / MICROMETER} um is a saddle: frequencies {freqs} Hz"
        )
    d = layout.distance_to_surface(p)
    return TrapAnalysis(
        minimum_position=p,
        b_min=b_min,
        frequencies=freqs,
        principal_axes=axes,
        distance_d=d,
        distance_dw=d + layout.wire_depth,
        hessian=hess,
        gradient_norm=float(np.linalg.norm(grad)),
        iterations=iterations,
        state=state,
        gravity_on=gravity_on,
    )


def scan_seed(layout, box, n=15, state=STATE_0, gravity_on=False, constants=RB87):
    """Lowest-potential point of a coarse grid over ``box`` ((lo, hi) per axis, m)."""
    if box is None:
        raise ValueError("either a seed or a search box is required")
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    value, _ = _effective_potential(layout, state, gravity_on, constants)
    best, best_val = None, np.inf
    for p in grid:
        try:
            v = value(p)
        except SingularityError:
            continue
        if v < best_val:
            best, best_val = p, v
    if best is None:
        raise TrapError("search box contains no valid points")
    return best


def calibrate_bias(
    layout: ChipLayout,
    state: HyperfineState = STATE_0,
    seed=None,
    free_axis="x",
    target_b0: float | None = None,
    gravity_on: bool = False,
    tolerance: float = 1e-5 * GAUSS,
    initial_step: float = 0.25 * GAUSS,
    max_expansions: int = 12,
):
    """Adjust one bias component so that |B_min| equals ``target_b0``.

    Returns ``(layout, analysis)``. The default target is the magic field.
    """
    from .hyperfine import magic_field

    if target_b0 is None:
        target_b0 = magic_field()
    axis = AXES[free_axis] if isinstance(free_axis, str) else int(free_axis)
    trace = []
    last_seed = [seed]

    def residual(value):
        trial = layout.with_bias_component(axis, value)
        analysis = find_minimum(trial, state, last_seed[0], gravity_on)
        last_seed[0] = analysis.minimum_position
        trace.append((value, analysis.b_min))
        return analysis.b_min - target_b0

    v0 = float(layout.bias[axis])
    try:
        r0 = residual(v0)
    except TrapError as exc:
        raise CalibrationError(f"no trap at the starting bias: {exc}", trace) from exc
    if abs(r0) < tolerance:
        return layout, find_minimum(layout, state, last_seed[0], gravity_on)

    # |B_min| grows with |B_axis| for an axial (Ioffe) component
    direction = np.sign(v0) if v0 != 0 else 1.0
    direction *= -np.sign(r0)
    lo, r_lo = v0, r0
    step = initial_step
    start_seed = last_seed[0]
    hi = None
    for _ in range(max_expansions):
        candidate = lo + direction * step
        try:
            r = residual(candidate)
        except TrapError as exc:
            trace.append((candidate, f"failed: {exc}"))
            last_seed[0] = start_seed
            step *= 0.5
            continue
        if np.sign(r) != np.sign(r_lo):
            hi = candidate
            break
        lo, r_lo = candidate, r
        start_seed = last_seed[0]
        step *= 2
    if hi is None:
        raise CalibrationError(
            f"could not bracket |B_min| = {target_b0 / GAUSS:.6f} G on bias axis {axis}", trace
        )
    value = brentq(residual, min(lo, hi), max(lo, hi), xtol=1e-12, rtol=1e-12)
    calibrated = layout.with_bias_component(axis, value)
    analysis = find_minimum(calibrated, state, last_seed[0], gravity_on)
    if abs(analysis.b_min - target_b0) > tolerance:
        raise CalibrationError("calibration did not reach the target field", trace)
    return calibrated, analysis


# --- parameterised layouts ---------------------------------------------------


def set_parameter(layout: ChipLayout, name: str, value: float) -> ChipLayout:
    """Return a copy of ``layout`` with one named parameter changed.

    ``name`` is ``"bias:x"``/``"bias:y"``/``"bias:z"`` (value in T) or
    ``"current:<NAME>"`` (value in A) for layouts loaded from a file.
    """
    kind, _, key = name.partition(":")
    if kind == "bias":
        return layout.with_bias_component(AXES[key], value)
    if kind == "current":
        source = layout.parameters.get("source")
        if source is None or key not in (source.get("currents_mA") or {}):
            raise KeyError(f"layout has no named current {key!r}")
        data = dict(source)
        data["currents_mA"] = dict(source["currents_mA"], **{key: value * 1e3})
        rebuilt = layout_from_dict(data)
        return replace(rebuilt, bias=layout.bias.copy())
    raise KeyError(f"unknown parameter {name!r}")


def get_parameter(layout: ChipLayout, name: str) -> float:
    kind, _, key = name.partition(":")
    if kind == "bias":
        return float(layout.bias[AXES[key]])
    if kind == "current":
        return float(layout.parameters["source"]["currents_mA"][key]) * 1e-3
    raise KeyError(f"unknown parameter {name!r}")


def place_at_distance(
    layout: ChipLayout,
    target_d: float,
    parameter: str,
    bounds: tuple,
    state: HyperfineState = STATE_0,
    seed=None,
    calibrate_axis="x",
    target_b0: float | None = None,
    tolerance: float = 0.05 * MICROMETER,
    n_steps: int = 24,
    max_rounds: int = 6,
):
    """Move the trap to atom-surface distance ``target_d`` and recalibrate.

    ``parameter`` is varied inside ``bounds`` (see :func:`set_parameter`);
    after every root-find the bias component ``calibrate_axis`` is
    re-tuned to ``target_b0``. Returns ``(layout, analysis)``.
    """
    if target_d <= 0.1 * MICROMETER:
        raise ValueError("target distance must lie above the chip surface exclusion zone")
    lo_b, hi_b = sorted(bounds)
    current = layout
    analysis = find_minimum(current, state, seed)
    for _ in range(max_rounds):
        current, analysis = _root_find_distance(
            current, analysis, target_d, parameter, lo_b, hi_b, state, n_steps
        )
        if calibrate_axis is not None:
            current, analysis = calibrate_bias(
                current, state, analysis.minimum_position, calibrate_axis, target_b0
            )
        if abs(analysis.distance_d - target_d) < tolerance:
            return current, analysis
    raise TrapError(
        f"distance {target_d / MICROMETER:.3f} um not reached; ended at "
        f"{analysis.distance_d / MICROMETER:.3f} um"
    )


def _root_find_distance(layout, analysis, target_d, parameter, lo_b, hi_b, state, n_steps):
    p0 = get_parameter(layout, parameter)

    def distance(value, seed):
        trial = set_parameter(layout, parameter, value)
        a = find_minimum(trial, state, seed)
        return a.distance_d - target_d, a

    r0 = analysis.distance_d - target_d
    if r0 == 0:
        return layout, analysis
    span = hi_b - lo_b
    # probe locally to decide which way the distance moves
    ends = (hi_b, lo_b)
    probe = min(p0 + 1e-3 * span, hi_b)
    try:
        r_probe, _ = distance(probe, analysis.minimum_position)
        if (r_probe - r0) * r0 > 0:
            ends = (lo_b, hi_b)
    except TrapError:
        ends = (lo_b, hi_b)
    # march with growing steps so every minimisation is seeded nearby
    for end in ends:
        if end == p0:
            continue
        direction = np.sign(end - p0)
        step = abs(end - p0) / n_steps / 4
        prev_v, prev_r, prev_a = p0, r0, analysis
        failures = 0
        while (end - prev_v) * direction > 0 and failures < 8:
            v = prev_v + direction * min(step, abs(end - prev_v))
            try:
                r, a = distance(v, prev_a.minimum_position)
            except TrapError:
                failures += 1
                step *= 0.5
                continue
            if np.sign(r) != np.sign(prev_r):
                seed_box = {"a": prev_a}

                def f(x):
                    res, an = distance(x, seed_box["a"].minimum_position)
                    seed_box["a"] = an
                    return res

                root = brentq(f, min(prev_v, v), max(prev_v, v), xtol=1e-12, rtol=1e-10)
                new_layout = set_parameter(layout, parameter, root)
                return new_layout, find_minimum(new_layout, state, seed_box["a"].minimum_position)
            prev_v, prev_r, prev_a = v, r, a
            step *= 1.5
    raise TrapError(
        f"distance {target_d / MICROMETER:.2f} um unreachable with {parameter} in [{lo_b}, {hi_b}]"
    )


def potential_slice(layout, analysis, axis_vector, half_width, n=101, constants=RB87):
    """U/h (Hz) along a line through the minimum; returns (offsets in m, energies)."""
    direction = as_vec3(axis_vector)
    direction = direction / np.linalg.norm(direction)
    offsets = np.linspace(-half_width, half_width, n)
    points = analysis.minimum_position + offsets[:, None] * direction
    mags = field_magnitude(layout, points)
    return offsets, analysis.state.moment * constants.bohr_hz_per_tesla * mags


def harmonic_trap(
    frequencies,
    b_min: float,
    position=(0.0, 0.0, 0.0),
    axes=None,
    state: HyperfineState = STATE_0,
    surface_height: float = 0.0,
    wire_depth: float = 0.0,
    constants=RB87,
) -> TrapAnalysis:
    """A TrapAnalysis for an ideal harmonic trap with the given frequencies."""
    f = np.sort(np.asarray(frequencies, dtype=float))
    if np.any(~(f > 0)):
        raise TrapError("trap frequencies must be positive")
    axes = np.eye(3) if axes is None else np.asarray(axes, dtype=float)
    mu = state.moment * constants.bohr_magneton
    if not mu > 0:
        raise TrapError(f"{state} is not trappable")
    curvature = (2 * np.pi * f) ** 2 * constants.rb87_mass / mu
    pos = as_vec3(position)
    d = float(pos[2] - surface_height)
    return TrapAnalysis(
        minimum_position=pos,
        b_min=float(b_min),
        frequencies=f,
        principal_axes=axes,
        distance_d=d,
        distance_dw=d + wire_depth,
        hessian=axes @ np.diag(curvature) @ axes.T,
        gradient_norm=0.0,
        iterations=0,
        state=state,
    )
