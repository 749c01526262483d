"""Two-level pulse dynamics, Ramsey fringes over an ensemble, and fringe fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import hilbert

NORM_TOLERANCE = 1e-9


class FitError(RuntimeError):
    """A fringe fit did not converge or the data carry no oscillation."""


# --- single-atom dynamics ----------------------------------------------------


def rabi_evolve(amplitudes, rabi_frequency, detuning, duration, phase=0.0):
    """Propagate (c0, c1) through a square pulse with the exact Rabi solution.

    Frequencies are in Hz (Omega/2pi, Delta/2pi). ``detuning`` may be an
    array; amplitudes broadcast as (..., 2). The rotating-frame Hamiltonian
    is (h/2) [[-Delta, Omega e^{-i phase}], [Omega e^{i phase}, Delta]].
    """
    c = np.asarray(amplitudes, dtype=complex)
    norm = np.sum(np.abs(c) ** 2, axis=-1)
    if np.any(np.abs(norm - 1) > NORM_TOLERANCE):
        raise ValueError("amplitudes must be normalised")
    if duration < 0:
        raise ValueError("duration must be >= 0")
    delta = np.asarray(detuning, dtype=float)
    w = np.hypot(rabi_frequency, delta)
    angle = np.pi * w * duration
    cos = np.cos(angle)
    # sin(angle)/w with the w -> 0 limit
    sinc = np.where(w > 0, np.sin(angle) / np.where(w > 0, w, 1.0), np.pi * duration)
    off = rabi_frequency * sinc
    c0, c1 = c[..., 0], c[..., 1]
    new0 = (cos + 1j * delta * sinc) * c0 - 1j * off * np.exp(-1j * phase) * c1
    new1 = -1j * off * np.exp(1j * phase) * c0 + (cos - 1j * delta * sinc) * c1
    return np.stack(np.broadcast_arrays(new0, new1), axis=-1)


@dataclass(frozen=True)
class PulseSequence:
    """Two-pulse Ramsey sequence with an effective two-level drive.

    ``pulses`` holds (kind, phase) pairs; kind is "pi/2", "pi" or a duration
    in seconds.
    """

    rabi_frequency: float = 500.0  # Hz
    pulses: tuple = (("pi/2", 0.0), ("pi/2", 0.0))
    hold_before: float = 0.0  # s
    ramsey_delay: float = 1.0  # s
    detuning_offset: float = 0.0  # Hz

    def __post_init__(self):
        if self.hold_before < 0 or self.ramsey_delay < 0:
            raise ValueError("durations must be >= 0")
        if not self.rabi_frequency > 0:
            raise ValueError("rabi_frequency must be positive")
        if len(self.pulses) != 2:
            raise ValueError("a Ramsey sequence has exactly two pulses")
        for kind, _ in self.pulses:
            self.pulse_duration(kind)

    def pulse_duration(self, kind) -> float:
        if kind == "pi/2":
            return 1 / (4 * self.rabi_frequency)
        if kind == "pi":
            return 1 / (2 * self.rabi_frequency)
        value = float(kind)
        if value < 0:
            raise ValueError("pulse duration must be >= 0")
        return value


def ramsey_amplitudes(delta, ramsey_delay, sequence: PulseSequence | None = None, damping=(1.0, 1.0)):
    """Final (c0, c1) for atoms starting in |0> with detuning ``delta`` (Hz).

    ``sequence=None`` uses ideal instantaneous pi/2 pulses. ``damping``
    scales the two amplitudes during the free evolution (population loss).
    """
    delta = np.asarray(delta, dtype=float)
    start = np.zeros(delta.shape + (2,), dtype=complex)
    start[..., 0] = 1.0
    if sequence is None:
        c = start @ (np.array([[1, -1j], [-1j, 1]]) / np.sqrt(2)).T
    else:
        kind, phase = sequence.pulses[0]
        c = rabi_evolve(start, sequence.rabi_frequency, delta, sequence.pulse_duration(kind), phase)
    theta = np.pi * delta * ramsey_delay
    c = np.stack([c[..., 0] * np.exp(1j * theta) * damping[0], c[..., 1] * np.exp(-1j * theta) * damping[1]], axis=-1)
    if sequence is None:
        return c @ (np.array([[1, -1j], [-1j, 1]]) / np.sqrt(2)).T
    kind, phase = sequence.pulses[1]
    norm = np.sqrt(np.sum(np.abs(c) ** 2, axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    out = rabi_evolve(c / safe, sequence.rabi_frequency, delta, sequence.pulse_duration(kind), phase)
    return out * norm


def ramsey_single(local_shift, detuning, ramsey_delay, sequence: PulseSequence | None = None):
    """P1 after a Ramsey sequence; ideal pulses give (1 + cos 2 pi (Delta - s) T_R) / 2."""
    if ramsey_delay < 0:
        raise ValueError("ramsey_delay must be >= 0")
    delta = np.asarray(detuning, dtype=float) - np.asarray(local_shift, dtype=float)
    if sequence is None:
        return 0.5 * (1 + np.cos(2 * np.pi * delta * ramsey_delay))
    return np.abs(ramsey_amplitudes(delta, ramsey_delay, sequence)[..., 1]) ** 2


# --- population decay ----------------------------------------------------------


@dataclass(frozen=True)
class DecayModel:
    """Population lifetimes versus atom-surface distance.

    State |0> interpolates linearly between ``anchors`` (d in m, tau in s)
    and is constant outside them; state |1> uses ``state1_factor`` times
    that value.
    """

    anchors: tuple = ((5e-6, 1.6), (20e-6, 11.0))
    state1_factor: float = 0.5
    constant_total_time: bool = True
    total_time: float | None = None  # T_H + T_R; defaults to the scan maximum

    def __post_init__(self):
        d = np.array([a[0] for a in self.anchors], dtype=float)
        tau = np.array([a[1] for a in self.anchors], dtype=float)
        if len(d) == 0 or np.any(tau <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("anchors need increasing distances and positive lifetimes")
        if not 0 < self.state1_factor <= 1:
            raise ValueError("state1_factor must lie in (0, 1]")

    def lifetimes(self, distance) -> tuple[float, float]:
        d = np.array([a[0] for a in self.anchors], dtype=float)
        tau = np.array([a[1] for a in self.anchors], dtype=float)
        tau0 = float(np.interp(distance, d, tau))
        return tau0, tau0 * self.state1_factor


def differential_lifetime_contrast(tau0, tau1, t) -> float:
    """Contrast multiplier 2 sqrt(p0 p1) / (p0 + p1) with p_i = exp(-t/tau_i)."""
    if not (tau0 > 0 and tau1 > 0):
        raise ValueError("lifetimes must be positive")
    # written in terms of the rate difference to stay exact for tau0 == tau1
    x = 0.5 * t * (1 / tau0 - 1 / tau1)
    return float(1 / np.cosh(x))


# --- ensemble Ramsey runs --------------------------------------------------------


@dataclass
class RamseyRun:
    scan_axis: str  # "time" (T_R) or "frequency" (Delta_R)
    scan_values: np.ndarray
    n1: np.ndarray  # recorded signal, noise included
    n0: np.ndarray
    n1_clean: np.ndarray  # noiseless ensemble average
    n0_clean: np.ndarray
    detection_noise: np.ndarray  # draws added to n1
    common_shift: np.ndarray  # per-point common-mode frequency draws (Hz)
    atom_total: float
    metadata: dict = field(default_factory=dict)


def ramsey_ensemble(
    shifts,
    sequence: PulseSequence,
    scan_axis: str,
    scan_values,
    atom_total: float = 1.0,
    decay: DecayModel | None = None,
    distance: float | None = None,
    ideal_pulses: bool = True,
    detection_noise_atoms: float = 0.0,
    common_shift_rms: float = 0.0,
    seed: int | None = None,
) -> RamseyRun:
    """Ensemble-averaged Ramsey signal over a scan of T_R or Delta_R."""
    shifts = np.asarray(shifts, dtype=float).ravel()
    values = np.asarray(scan_values, dtype=float)
    if values.size == 0:
        raise ValueError("scan is empty")
    if shifts.size == 0:
        raise ValueError("ensemble is empty")
    if scan_axis not in ("time", "frequency"):
        raise ValueError("scan_axis must be 'time' or 'frequency'")
    if decay is not None and distance is None:
        raise ValueError("a decay model needs the atom-surface distance")
    rng = np.random.default_rng(seed)
    common = rng.standard_normal(values.size) * common_shift_rms
    noise = rng.standard_normal(values.size) * detection_noise_atoms
    noise0 = rng.standard_normal(values.size) * detection_noise_atoms
    pulses = None if ideal_pulses else sequence
    n1_clean = np.empty(values.size)
    n0_clean = np.empty(values.size)
    n1 = np.empty(values.size)
    n0 = np.empty(values.size)
    if decay is not None:
        tau0, tau1 = decay.lifetimes(distance)
        times = values if scan_axis == "time" else np.full(values.size, sequence.ramsey_delay)
        total = decay.total_time if decay.total_time is not None else float(times.max())
    for k, v in enumerate(values):
        t_r, det = (v, sequence.detuning_offset) if scan_axis == "time" else (sequence.ramsey_delay, v)
        damping = (1.0, 1.0)
        survival = 1.0
        if decay is not None:
            hold = max(total - t_r, 0.0) if decay.constant_total_time else sequence.hold_before
            survival = np.exp(-hold / tau0)
            damping = (np.exp(-t_r / (2 * tau0)), np.exp(-t_r / (2 * tau1)))
        for clean, noisy, offset in ((True, False, 0.0), (False, True, common[k])):
            c = ramsey_amplitudes(det - shifts - offset, t_r, pulses, damping)
            p = np.mean(np.abs(c) ** 2, axis=0) * survival * atom_total
            if clean:
                n0_clean[k], n1_clean[k] = p
            else:
                n0[k], n1[k] = p
    n1 = np.clip(n1 + noise, 0.0, atom_total)
    n0 = np.clip(n0 + noise0, 0.0, atom_total)
    return RamseyRun(
        scan_axis=scan_axis,
        scan_values=values,
        n1=n1,
        n0=n0,
        n1_clean=n1_clean,
        n0_clean=n0_clean,
        detection_noise=noise,
        common_shift=common,
        atom_total=atom_total,
        metadata={"ideal_pulses": ideal_pulses, "seed": seed},
    )


# --- fringe analysis ---------------------------------------------------------------


@dataclass(frozen=True)
class ContrastResult:
    contrast: float
    amplitude: float  # half peak-to-peak
    offset: float
    phase: float
    period: float  # in scan units
    signal_to_noise: float
    residual_std: float


def contrast(scan_values, signal, period: float, refine: bool = True) -> ContrastResult:
    """C = (N_max - N_min)/(N_max + N_min) from a sinusoidal fit.

    ``period`` is the design period of the fringe in scan units (1/T_R for
    a frequency scan). S/N is peak-to-peak amplitude over the residual std.
    """
    x = np.asarray(scan_values, dtype=float)
    y = np.asarray(signal, dtype=float)
    span = x.max() - x.min()
    if len(x) < 8 or len(x) * period / max(span, period) < 8:
        raise ValueError("need at least 8 points per fringe period")

    def design(p):
        arg = 2 * np.pi * x / p
        return np.column_stack([np.cos(arg), np.sin(arg), np.ones_like(x)])

    coef, *_ = np.linalg.lstsq(design(period), y, rcond=None)
    p_fit = period
    if refine:
        a, b, c = coef
        amp0, ph0 = np.hypot(a, b), np.arctan2(-b, a)

        def resid(q):
            return q[0] * np.cos(2 * np.pi * x / q[3] + q[1]) + q[2] - y

        sol = least_squares(resid, [amp0, ph0, c, period], x_scale=[max(amp0, 1e-12), 1, max(abs(c), 1e-12), period])
        if not sol.success:
            raise FitError("sinusoidal fit did not converge")
        p_fit = sol.x[3]
        coef, *_ = np.linalg.lstsq(design(p_fit), y, rcond=None)
    a, b, c = coef
    amp = float(np.hypot(a, b))
    residual = y - design(p_fit) @ coef
    std = float(np.std(residual))
    return ContrastResult(
        contrast=amp / c,
        amplitude=amp,
        offset=float(c),
        phase=float(np.arctan2(-b, a)),
        period=float(p_fit),
        signal_to_noise=2 * amp / std if std > 0 else np.inf,
        residual_std=std,
    )


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    frequency: float  # Hz
    phase: float  # rad
    offset: float
    decay_time: float  # s, may be inf when no decay is resolved
    uncertainties: dict
    residual_rms: float
    lower_bound: bool = False  # decay not resolved within the scan
    decay_time_limit: float | None = None  # 2-sigma lower limit when lower_bound
    bootstrap_std: float | None = None


def _damped(p, t):
    a, f, phi, c, gamma = p
    return a * np.exp(-gamma * t) * np.sin(2 * np.pi * f * t + phi) + c


def _initial_guess(t, y):
    c0 = float(np.mean(y))
    dt = np.median(np.diff(t))
    n = len(t)
    pad = 8 * int(2 ** np.ceil(np.log2(n)))
    # resample to uniform spacing for the spectrum
    grid = np.linspace(t[0], t[-1], n)
    yy = np.interp(grid, t, y) - c0
    spectrum = np.abs(np.fft.rfft(yy * np.hanning(n), pad))
    freqs = np.fft.rfftfreq(pad, (grid[1] - grid[0]) if n > 1 else dt)
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    if spectrum[k] <= 1e-12 * max(np.abs(yy).max(), 1e-300) * n or k == 0:
        raise FitError("degenerate spectrum: no oscillation found")
    f0 = float(freqs[k])
    a0 = 0.5 * float(np.ptp(y))
    envelope = np.abs(hilbert(yy))
    core = slice(n // 10, n - n // 10) if n >= 20 else slice(None)
    env = np.maximum(envelope[core], 1e-12 * a0 if a0 > 0 else 1e-300)
    slope = np.polyfit(grid[core], np.log(env), 1)[0]
    gamma0 = max(-float(slope), 0.0)
    return c0, f0, a0, gamma0


def fit_damped_sine(
    times,
    values,
    bootstrap: int = 0,
    seed: int | None = None,
    max_restarts: int = 8,
) -> FitResult:
    """Fit a exp(-t/tau) sin(2 pi f t + phi) + c by least squares.

    The decay rate is bounded below by zero; an undetectable decay gives
    ``lower_bound=True``. ``bootstrap > 0`` adds a residual-resampling
    estimate of the decay-time spread (half the central 68 % interval).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 16:
        raise ValueError("need at least 16 samples")
    order = np.argsort(t)
    t, y = t[order], y[order]
    c0, f0, a0, gamma0 = _initial_guess(t, y)
    span = t[-1] - t[0]
    if span * f0 < 2:
        raise ValueError("samples must span at least two oscillation periods")

    def resid(p):
        return _damped(p, t) - y

    lower = [0.0, 0.0, -np.inf, -np.inf, 0.0]
    upper = [np.inf, np.inf, np.inf, np.inf, np.inf]
    best = None
    phases = np.linspace(-np.pi, np.pi, max_restarts, endpoint=False)
    for phi in phases:
        start = [max(a0, 1e-12), f0, phi, c0, gamma0]
        try:
            sol = least_squares(resid, start, bounds=(lower, upper), x_scale="jac", max_nfev=2000)
        except ValueError:
            continue
        if sol.success and (best is None or sol.cost < best.cost):
            best = sol
    if best is None:
        raise FitError("damped-sine fit did not converge after restarts")
    p = best.x
    p[2] = (p[2] + np.pi) % (2 * np.pi) - np.pi
    r = resid(p)
    dof = max(len(t) - len(p), 1)
    s2 = float(r @ r) / dof
    jac = best.jac
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(len(p), np.nan)
    gamma, d_gamma = p[4], err[4]
    tau = 1 / gamma if gamma > 0 else np.inf
    d_tau = d_gamma / gamma**2 if gamma > 0 else np.inf
    names = ("amplitude", "frequency", "phase", "offset")
    unc = {n: float(e) for n, e in zip(names, err[:4])}
    unc["decay_time"] = float(d_tau)
    # decay not resolved: the rate is consistent with zero
    lower_bound = gamma <= 2 * d_gamma
    limit = None
    if lower_bound:
        limit = 1 / (gamma + 2 * d_gamma) if gamma + 2 * d_gamma > 0 else np.inf
    boot = None
    if bootstrap:
        rng = np.random.default_rng(seed)
        fitted = _damped(p, t)
        taus = []
        for _ in range(bootstrap):
            fake = fitted + rng.choice(r, size=len(r), replace=True)
            sol = least_squares(lambda q: _damped(q, t) - fake, p, bounds=(lower, upper), x_scale="jac")
            taus.append(1 / sol.x[4] if sol.x[4] > 0 else np.inf)
        # the decay time is skewed with a long tail (rates near zero), so the
        # spread is half the central 68 % interval rather than a plain std
        lo, hi = np.percentile(np.asarray(taus), [15.865, 84.135])
        boot = float(0.5 * (hi - lo)) if np.isfinite(hi) else np.inf
    return FitResult(
        amplitude=float(p[0]),
        frequency=float(p[1]),
        phase=float(p[2]),
        offset=float(p[3]),
        decay_time=float(tau),
        uncertainties=unc,
        residual_rms=float(np.sqrt(np.mean(r**2))),
        lower_bound=bool(lower_bound),
        decay_time_limit=limit,
        bootstrap_std=boot,
    )
