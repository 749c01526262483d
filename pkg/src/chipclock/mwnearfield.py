"""Microwave near fields, hyperfine matrix elements and AC Zeeman potentials.

Also provides the 8x8 ground-state Hamiltonian that serves as an
independent check of the Breit-Rabi closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constants import GAUSS, MILLIAMPERE, RB87, PhysicalConstants
from .fieldmap import ChipLayout, SingularityError, WireSegment, as_vec3, field_vector
from .hyperfine import STATE_0, STATE_1, HyperfineState

SPEED_OF_LIGHT = 299_792_458.0  # m/s
NUCLEAR_SPIN = 1.5
PERTURBATIVE_RATIO = 5.0  # |Delta| / Omega below which a warning is issued


class NearFieldWarning(UserWarning):
    """Evaluation point too far from the source for the quasi-static rule."""


class PerturbationWarning(UserWarning):
    """|Delta| / Omega is small enough that Omega^2 / 4 Delta is inaccurate."""


class ResonanceError(ValueError):
    """The drive is within one Rabi frequency of a transition."""


# --- spin operators -----------------------------------------------------------


def _spin_matrices(j):
    m = np.arange(j, -j - 1, -1)  # descending basis |j, j> ... |j, -j>
    jp = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), 1)
    jz = np.diag(m)
    return jz, jp, jp.T.copy(), m


@lru_cache(maxsize=None)
def _operators():
    iz, ip, im, mi = _spin_matrices(NUCLEAR_SPIN)
    sz, sp, sm, ms = _spin_matrices(0.5)
    e_i, e_s = np.eye(4), np.eye(2)
    ops = {
        "Iz": np.kron(iz, e_s),
        "I+": np.kron(ip, e_s),
        "I-": np.kron(im, e_s),
        "Sz": np.kron(e_i, sz),
        "S+": np.kron(e_i, sp),
        "S-": np.kron(e_i, sm),
    }
    mf = (mi[:, None] + ms[None, :]).ravel()
    return ops, mf


def hamiltonian(b_magnitude: float, constants: PhysicalConstants = RB87) -> np.ndarray:
    """H/h in Hz over the |m_I, m_S> product basis, quantisation axis along B."""
    ops, _ = _operators()
    a_hfs = constants.hyperfine_splitting / (NUCLEAR_SPIN + 0.5)
    i_dot_s = ops["Iz"] @ ops["Sz"] + 0.5 * (ops["I+"] @ ops["S-"] + ops["I-"] @ ops["S+"])
    zeeman = constants.bohr_hz_per_tesla * b_magnitude * (
        constants.electron_g_factor * ops["Sz"] + constants.nuclear_g_factor * ops["Iz"]
    )
    return a_hfs * i_dot_s + zeeman


@dataclass(frozen=True)
class Eigensystem:
    b_magnitude: float
    energies: np.ndarray  # Hz, ordered like ``labels``
    vectors: np.ndarray  # columns are eigenvectors in the product basis
    labels: tuple  # HyperfineState per column

    def index(self, state: HyperfineState) -> int:
        return self.labels.index(state)

    def energy(self, state: HyperfineState) -> float:
        return float(self.energies[self.index(state)])

    def vector(self, state: HyperfineState) -> np.ndarray:
        return self.vectors[:, self.index(state)]


def eigensystem(b_magnitude: float, constants: PhysicalConstants = RB87) -> Eigensystem:
    """Diagonalise the 8x8 Hamiltonian block by block in m_F.

    m_F is conserved, so each block holds at most one F=1 and one F=2
    state; the upper eigenvalue of a 2x2 block is the F=2 level. This
    labelling is exact at every field, including B=0.
    """
    if b_magnitude < 0:
        raise ValueError("field magnitude must be non-negative")
    h = hamiltonian(b_magnitude, constants)
    _, mf = _operators()
    energies, labels, vectors = [], [], []
    for m in (-2, -1, 0, 1, 2):
        idx = np.flatnonzero(mf == m)
        vals, vecs = np.linalg.eigh(h[np.ix_(idx, idx)])
        for k, f in zip(range(len(vals)), (1, 2) if len(vals) == 2 else (2,)):
            full = np.zeros(8)
            full[idx] = vecs[:, k]
            # fix the overall sign for reproducible matrix-element phases
            full *= np.sign(full[np.argmax(np.abs(full))])
            energies.append(vals[k])
            labels.append(HyperfineState(f, m))
            vectors.append(full)
    order = np.argsort(energies, kind="stable")
    return Eigensystem(
        b_magnitude=float(b_magnitude),
        energies=np.asarray(energies)[order],
        vectors=np.column_stack(vectors)[:, order],
        labels=tuple(labels[k] for k in order),
    )


# --- microwave source ------------------------------------------------------------


@dataclass(frozen=True)
class MwSource:
    """Microwave currents on chip wires, described by their peak amplitudes.

    ``phases`` (rad, one per segment) default to zero, giving a real field
    amplitude. ``frequency`` is the absolute drive frequency in Hz.
    """

    segments: tuple
    frequency: float
    phases: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("a microwave source needs at least one segment")
        if any(s.current == 0 for s in self.segments):
            raise ValueError("microwave current amplitudes must be non-zero")
        if self.phases is not None and len(self.phases) != len(self.segments):
            raise ValueError("one phase per segment is required")
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    def scaled(self, factor: float) -> "MwSource":
        return MwSource(tuple(s.with_current(s.current * factor) for s in self.segments), self.frequency, self.phases)

    def with_frequency(self, frequency: float) -> "MwSource":
        return MwSource(self.segments, frequency, self.phases)


def peak_from_peak_to_peak(current_pp: float) -> float:
    return 0.5 * current_pp


def straight_wire_source(
    current_pp: float,
    frequency: float,
    length: float = 0.02,
    axis=(1.0, 0.0, 0.0),
    origin=(0.0, 0.0, 0.0),
) -> MwSource:
    """A long straight wire centred at ``origin``; ``current_pp`` is peak-to-peak (A)."""
    axis = as_vec3(axis) / np.linalg.norm(axis)
    origin = as_vec3(origin)
    seg = WireSegment(origin - 0.5 * length * axis, origin + 0.5 * length * axis, peak_from_peak_to_peak(current_pp))
    return MwSource((seg,), frequency)


def mw_field_amplitude(source: MwSource, point) -> np.ndarray:
    """Complex field amplitude (T) at ``point`` from the quasi-static rule."""
    p = as_vec3(point)
    limit = source.wavelength / 20
    nearest = min(_distance(s, p) for s in source.segments)
    if nearest > limit:
        warnings.warn(
            f"point is {nearest * 1e3:.2f} mm from the microwave source, beyond "
            f"lambda/20 = {limit * 1e3:.2f} mm; quasi-static rule degraded",
            NearFieldWarning,
            stacklevel=2,
        )
    phases = source.phases or (0.0,) * len(source.segments)
    total = np.zeros(3, dtype=complex)
    for k, (seg, phi) in enumerate(zip(source.segments, phases)):
        layout = ChipLayout(segments=(seg,), bias=np.zeros(3))
        try:
            total += field_vector(layout, p) * np.exp(1j * phi)
        except SingularityError as exc:
            raise SingularityError(k) from exc
    return total


def _distance(seg: WireSegment, p: np.ndarray) -> float:
    d = seg.end - seg.start
    t = np.clip((p - seg.start) @ d / (d @ d), 0, 1)
    return float(np.linalg.norm(p - seg.start - t * d))


# --- polarisation and matrix elements --------------------------------------------------


def _transverse_basis(axis):
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    ex = np.cross(ref, axis)
    ex /= np.linalg.norm(ex)
    ey = np.cross(axis, ex)
    return ex, ey


def polarization_components(b_mw, static_direction) -> np.ndarray:
    """(pi, sigma+, sigma-) complex amplitudes in T relative to the static axis.

    With b_x', b_y' the transverse components, sigma+- = (b_x' -+ i b_y')/sqrt(2),
    so that b . V = pi V_z + (sigma+ V_+ + sigma- V_-)/sqrt(2).
    """
    axis = np.asarray(static_direction, dtype=float)
    norm = np.linalg.norm(axis)
    if not norm > 0:
        raise ValueError("static field direction is undefined (zero field)")
    axis = axis / norm
    b = np.asarray(b_mw, dtype=complex)
    ex, ey = _transverse_basis(axis)
    bx, by, bz = b @ ex, b @ ey, b @ axis
    return np.array([bz, (bx - 1j * by) / np.sqrt(2), (bx + 1j * by) / np.sqrt(2)])


def _coupling_operators(constants: PhysicalConstants):
    ops, _ = _operators()
    g, gi = constants.electron_g_factor, constants.nuclear_g_factor
    vz = g * ops["Sz"] + gi * ops["Iz"]
    vp = g * ops["S+"] + gi * ops["I+"]
    vm = g * ops["S-"] + gi * ops["I-"]
    return vz, vp, vm


def matrix_element(upper: HyperfineState, lower: HyperfineState, polarization, system: Eigensystem, constants=RB87) -> complex:
    """<upper| b . (g_J S + g_I I) |lower> in T (times mu_B gives the coupling)."""
    vz, vp, vm = _coupling_operators(constants)
    pi, sp, sm = polarization
    op = pi * vz + (sp * vp + sm * vm) / np.sqrt(2)
    return complex(system.vector(upper) @ op @ system.vector(lower))


def _order_pair(a: HyperfineState, b: HyperfineState):
    if a.f_quantum == b.f_quantum:
        raise ValueError("both states lie in the same hyperfine manifold; no microwave transition")
    return (a, b) if a.f_quantum == 2 else (b, a)


def transition_rabi(state_a, state_b, polarization, b_static: float, constants=RB87) -> float:
    """Resonant Rabi frequency Omega/2pi (Hz) of the F=1 <-> F=2 pair.

    Omega = mu_B |<2| b . (g_J S + g_I I) |1>| / hbar for the field
    amplitude decomposition ``polarization``; transitions with |dm| > 1
    return 0.
    """
    upper, lower = _order_pair(state_a, state_b)
    if abs(upper.mf_quantum - lower.mf_quantum) > 1:
        return 0.0
    system = eigensystem(b_static, constants)
    element = matrix_element(upper, lower, polarization, system, constants)
    return float(abs(element) * constants.bohr_hz_per_tesla)


def transition_frequency_between(state_a, state_b, b_static: float, constants=RB87) -> float:
    upper, lower = _order_pair(state_a, state_b)
    system = eigensystem(b_static, constants)
    return system.energy(upper) - system.energy(lower)


def pi_partner_reference(b_static: float, constants=RB87) -> float:
    """Mean frequency of |0> <-> |2,-1> and |1,+1> <-> |1> at ``b_static`` (Hz)."""
    system = eigensystem(b_static, constants)
    a = system.energy(HyperfineState(2, -1)) - system.energy(STATE_0)
    b = system.energy(STATE_1) - system.energy(HyperfineState(1, 1))
    return 0.5 * (a + b)


def drive_frequency_for_detuning(detuning: float, b_static: float, constants=RB87) -> float:
    """Absolute drive frequency detuned by ``detuning`` from the pi-partner transitions."""
    return pi_partner_reference(b_static, constants) + detuning


@dataclass(frozen=True)
class LevelShift:
    shift: float  # U/h in Hz
    terms: tuple  # (partner, Omega/2pi, Delta) per coupled level


def level_shift(
    state: HyperfineState,
    polarization,
    b_static: float,
    frequency: float,
    constants: PhysicalConstants = RB87,
) -> LevelShift:
    """AC Zeeman shift of ``state`` from every partner in the other manifold.

    Each pair contributes +Omega^2/(4 Delta) to its lower level and
    -Omega^2/(4 Delta) to its upper level, with Delta = nu_mw - nu_t.
    """
    system = eigensystem(b_static, constants)
    total, terms = 0.0, []
    for partner in system.labels:
        if partner.f_quantum == state.f_quantum or abs(partner.mf_quantum - state.mf_quantum) > 1:
            continue
        upper, lower = _order_pair(state, partner)
        element = matrix_element(upper, lower, polarization, system, constants)
        omega = abs(element) * constants.bohr_hz_per_tesla
        if omega == 0:
            continue
        delta = frequency - (system.energy(upper) - system.energy(lower))
        if abs(delta) < omega:
            raise ResonanceError(
                f"drive within one Rabi frequency of {lower} <-> {upper} "
                f"(Delta = {delta:.4g} Hz, Omega = {omega:.4g} Hz)"
            )
        if abs(delta) < PERTURBATIVE_RATIO * omega:
            warnings.warn(
                f"|Delta|/Omega = {abs(delta) / omega:.2f} for {lower} <-> {upper}",
                PerturbationWarning,
                stacklevel=2,
            )
        sign = 1.0 if state == lower else -1.0
        total += sign * omega**2 / (4 * delta)
        terms.append((partner, omega, delta))
    return LevelShift(shift=float(total), terms=tuple(terms))


def dressed_level_shift(
    state: HyperfineState,
    polarization,
    b_static: float,
    frequency: float,
    constants: PhysicalConstants = RB87,
) -> float:
    """Shift of ``state`` from exact 2x2 dressed-state diagonalisation per partner (Hz).

    Each coupled pair contributes sign(Delta) (sqrt(Delta^2 + Omega^2) - |Delta|) / 2
    to its lower level and the opposite to its upper level; this reduces to
    +-Omega^2 / (4 Delta) for |Delta| >> Omega.
    """
    system = eigensystem(b_static, constants)
    total = 0.0
    for partner in system.labels:
        if partner.f_quantum == state.f_quantum or abs(partner.mf_quantum - state.mf_quantum) > 1:
            continue
        upper, lower = _order_pair(state, partner)
        omega = abs(matrix_element(upper, lower, polarization, system, constants)) * constants.bohr_hz_per_tesla
        if omega == 0:
            continue
        delta = frequency - (system.energy(upper) - system.energy(lower))
        shift = np.sign(delta) * 0.5 * (np.hypot(delta, omega) - abs(delta))
        total += shift if state == lower else -shift
    return float(total)


def _static_and_polarization(source, point, layout, constants):
    b_static = field_vector(layout, point)
    b_mag = float(np.linalg.norm(b_static))
    pol = polarization_components(mw_field_amplitude(source, point), b_static)
    return b_mag, pol


def ac_zeeman_shift(state: HyperfineState, source: MwSource, point, layout: ChipLayout, constants=RB87) -> float:
    """U/h (Hz) of ``state`` at ``point`` with the static field taken from ``layout``."""
    b_mag, pol = _static_and_polarization(source, point, layout, constants)
    return level_shift(state, pol, b_mag, source.frequency, constants).shift


def differential_shift(source, point, layout, constants=RB87) -> float:
    """U_mw/h = U(|1>) - U(|0>) in Hz."""
    b_mag, pol = _static_and_polarization(source, point, layout, constants)
    return (
        level_shift(STATE_1, pol, b_mag, source.frequency, constants).shift
        - level_shift(STATE_0, pol, b_mag, source.frequency, constants).shift
    )


def dressed_moment_perturbation(
    state: HyperfineState,
    source: MwSource,
    point,
    layout: ChipLayout,
    step: float = 1e-3 * GAUSS,
    constants=RB87,
) -> float:
    """Delta mu = -dU/dB in units of mu_B, by central difference in |B_static|.

    The static field direction and the drive frequency are held fixed.
    """
    b_mag, pol = _static_and_polarization(source, point, layout, constants)
    lo = max(b_mag - step, 0.0)
    hi = b_mag + step
    u_hi = level_shift(state, pol, hi, source.frequency, constants).shift
    u_lo = level_shift(state, pol, lo, source.frequency, constants).shift
    return float(-(u_hi - u_lo) / (hi - lo) / constants.bohr_hz_per_tesla)


# --- potential maps -----------------------------------------------------------------


@dataclass
class AcZeemanMap:
    positions: np.ndarray  # (n, 3) m
    static_field: np.ndarray  # (n, 3) T
    polarization: np.ndarray  # (n, 3) complex T: pi, sigma+, sigma-
    shift_0: np.ndarray  # Hz
    shift_1: np.ndarray  # Hz
    mask: np.ndarray  # True where the point is valid
    two_photon_suppressed: np.ndarray  # Zeeman splitting above the threshold
    errors: dict = field(default_factory=dict)  # index -> message

    @property
    def differential(self) -> np.ndarray:
        return self.shift_1 - self.shift_0

    @property
    def polarization_fractions(self) -> np.ndarray:
        power = np.abs(self.polarization) ** 2
        total = power.sum(axis=1, keepdims=True)
        return np.divide(power, total, out=np.zeros_like(power), where=total > 0)


def zeeman_splitting(b_magnitude, constants=RB87):
    """Splitting between adjacent m_F levels, |g_F| mu_B B / h with g_F = 1/2 (Hz)."""
    return 0.5 * constants.bohr_hz_per_tesla * np.asarray(b_magnitude)


def potential_map(
    source: MwSource,
    layout: ChipLayout,
    points,
    two_photon_threshold: float = 1e6,
    threads: int = 1,
    constants: PhysicalConstants = RB87,
) -> AcZeemanMap:
    """Evaluate both qubit-state shifts on a set of points.

    Points with zero static field or a per-point failure are masked and
    listed in ``errors``; the map is returned regardless.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    static = np.full((n, 3), np.nan)
    pol = np.full((n, 3), np.nan, dtype=complex)
    s0 = np.full(n, np.nan)
    s1 = np.full(n, np.nan)
    mask = np.zeros(n, dtype=bool)
    errors = {}

    def work(k):
        p = pts[k]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearFieldWarning)
            b = field_vector(layout, p)
            bm = float(np.linalg.norm(b))
            if not bm > 0:
                raise ValueError("zero static field: polarisation undefined")
            pk = polarization_components(mw_field_amplitude(source, p), b)
            u0 = level_shift(STATE_0, pk, bm, source.frequency, constants).shift
            u1 = level_shift(STATE_1, pk, bm, source.frequency, constants).shift
        return b, pk, u0, u1

    def run(k):
        try:
            return k, work(k), None
        except (ValueError, SingularityError) as exc:
            return k, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n)))
    else:
        results = [run(k) for k in range(n)]
    for k, value, err in results:
        if err is not None:
            errors[k] = err
            continue
        static[k], pol[k], s0[k], s1[k] = value
        mask[k] = True
    bmag = np.linalg.norm(np.nan_to_num(static), axis=1)
    suppressed = mask & (zeeman_splitting(bmag, constants) >= two_photon_threshold)
    return AcZeemanMap(pts, static, pol, s0, s1, mask, suppressed, errors)


def reference_configuration(
    static_field: float = 1e-3 * GAUSS,
    distance: float = 10e-6,
    current_pp: float = 20 * MILLIAMPERE,
    detuning: float = 50e6,
    constants: PhysicalConstants = RB87,
):
    """Straight wire along x at the origin, atom at height ``distance`` above it.

    The static field is uniform and parallel to the microwave field at the
    atom (pure pi polarisation). Returns (source, layout, point).
    """
    point = np.array([0.0, 0.0, distance])
    wire = straight_wire_source(current_pp, 1.0)
    direction = np.real(mw_field_amplitude(wire, point))
    direction /= np.linalg.norm(direction)
    layout = ChipLayout(segments=(), bias=static_field * direction)
    frequency = drive_frequency_for_detuning(detuning, static_field, constants)
    return wire.with_frequency(frequency), layout, point
