"""Shot-by-shot clock operation, noise budgets and Allan-deviation analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import CM3, MILLIGAUSS
from .ensemble import DEFAULT_COLLISIONAL_COEFFICIENT
from .hyperfine import magic_field, quadratic_coefficient, transition_frequency


@dataclass(frozen=True)
class NoiseBudget:
    """Per-shot noise sources of the clock.

    The static offset from B0 turns field jitter into a first-order
    frequency noise, 2 beta B_off dB.
    """

    static_field_offset: float = 5 * MILLIGAUSS  # T
    field_jitter_rms: float = 5 * MILLIGAUSS  # T
    atom_number_fractional_rms: float = 0.04
    detection_noise_atoms: float = 150.0  # rms per detected state
    atom_shot_noise: bool = False
    mean_density: float = 1e12 / CM3 / 2**1.5  # m^-3, density averaged over the cloud
    collisional_coefficient: float = DEFAULT_COLLISIONAL_COEFFICIENT  # Hz m^3

    def __post_init__(self):
        for name in ("field_jitter_rms", "atom_number_fractional_rms", "detection_noise_atoms", "mean_density"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def zero(cls) -> "NoiseBudget":
        return cls(0.0, 0.0, 0.0, 0.0, False, 0.0, 0.0)


@dataclass(frozen=True)
class ReferenceDrift:
    """Fractional-frequency error of the local oscillator."""

    linear_rate: float = 0.0  # 1/s
    onset: float = 0.0  # s
    flicker_level: float = 0.0  # flicker-floor Allan deviation


@dataclass(frozen=True)
class ClockSettings:
    atom_number: float = 1.5e4
    contrast: float = float(np.exp(-1 / 2.8))
    ramsey_delay: float = 1.0  # s
    cycle_period: float = 23.0  # s
    operating_phase: float = np.pi / 2  # fringe phase of the operating point
    normalise: bool = True  # detect N1 / (N0 + N1)
    white_fm_rms: float | None = None  # Hz; replaces the physical budget when set


@dataclass
class ClockSeries:
    cycle_period: float
    timestamps: np.ndarray  # s
    n1: np.ndarray
    delta_nu: np.ndarray  # inferred, Hz
    true_delta_nu: np.ndarray | None = None
    nu10: float = field(default_factory=lambda: float(transition_frequency(magic_field())))
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.timestamps) > 1:
            steps = np.diff(self.timestamps)
            if np.any(steps <= 0) or not np.allclose(steps, self.cycle_period, rtol=1e-9, atol=0):
                raise ValueError("timestamps must increase by the cycle period")
        if not np.all(np.isfinite(self.delta_nu)):
            raise ValueError("inferred frequencies must be finite")

    @property
    def fractional(self) -> np.ndarray:
        return self.delta_nu / self.nu10


def fringe_slope(atom_number, contrast, ramsey_delay, operating_phase=np.pi / 2) -> float:
    """dN1/d(delta nu) in atoms per Hz for N1 = N/2 (1 + C cos(phi_op - 2 pi dnu T_R))."""
    return float(np.pi * atom_number * contrast * ramsey_delay * np.sin(operating_phase))


def n1_to_frequency(delta_n, slope):
    """Invert a population change at the fringe slope: dnu = dN / slope."""
    if slope == 0:
        raise ValueError("fringe slope is zero")
    return np.asarray(delta_n, dtype=float) / slope


def run_clock(
    budget: NoiseBudget = NoiseBudget(),
    settings: ClockSettings = ClockSettings(),
    n_shots: int = 10_000,
    seed: int | None = None,
    drift: ReferenceDrift = ReferenceDrift(),
    beta: float | None = None,
) -> ClockSeries:
    """Simulate open-loop operation at the slope of the Ramsey fringe."""
    s = settings
    if abs(np.sin(s.operating_phase)) < 1e-6:
        raise ValueError("operating point sits on a fringe extremum (zero slope)")
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    beta = quadratic_coefficient() if beta is None else beta
    nu10 = float(transition_frequency(magic_field()))
    rng = np.random.default_rng(seed)
    t = np.arange(n_shots) * s.cycle_period
    number = s.atom_number * (1 + budget.atom_number_fractional_rms * rng.standard_normal(n_shots))
    number = np.maximum(number, 0.0)
    if s.white_fm_rms is not None:
        true = s.white_fm_rms * rng.standard_normal(n_shots)
    else:
        b = budget.static_field_offset + budget.field_jitter_rms * rng.standard_normal(n_shots)
        field_term = beta * (b**2 - budget.static_field_offset**2)
        coll = budget.collisional_coefficient * budget.mean_density * (number / s.atom_number - 1)
        true = field_term + coll
    # the reference oscillator error appears as an apparent frequency change
    ref = drift.linear_rate * np.clip(t - drift.onset, 0, None)
    if drift.flicker_level > 0:
        ref = ref + _flicker(n_shots, drift.flicker_level, rng)
    apparent = true + ref * nu10
    # cos(phi - x) expanded so the quadrature point is exact
    fringe = np.cos(s.operating_phase) * np.cos(2 * np.pi * apparent * s.ramsey_delay) + np.sin(
        s.operating_phase
    ) * np.sin(2 * np.pi * apparent * s.ramsey_delay)
    p1 = 0.5 * (1 + s.contrast * fringe)
    if budget.atom_shot_noise:
        whole = np.rint(number).astype(np.int64)
        n1 = rng.binomial(whole, np.clip(p1, 0, 1)).astype(float)
        n0 = whole - n1
    else:
        n1 = number * p1
        n0 = number - n1
    n1 = n1 + budget.detection_noise_atoms * rng.standard_normal(n_shots)
    n0 = n0 + budget.detection_noise_atoms * rng.standard_normal(n_shots)
    if s.normalise:
        total = n0 + n1
        signal = np.divide(n1, total, out=np.full(n_shots, 0.5), where=total != 0) * s.atom_number
    else:
        signal = n1
    reference = 0.5 * s.atom_number * (1 + s.contrast * np.cos(s.operating_phase))
    slope = fringe_slope(s.atom_number, s.contrast, s.ramsey_delay, s.operating_phase)
    inferred = n1_to_frequency(signal - reference, slope)
    return ClockSeries(
        cycle_period=s.cycle_period,
        timestamps=t,
        n1=n1,
        delta_nu=inferred,
        true_delta_nu=true,
        nu10=nu10,
        metadata={"seed": seed, "slope_atoms_per_Hz": slope},
    )


def _flicker(n, level, rng):
    """Flicker-FM fractional frequency noise with a roughly flat Allan floor."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    f[0] = f[1] if n > 1 else 1.0
    shaped = np.fft.irfft(spec / np.sqrt(f), n)
    shaped -= shaped.mean()
    # flicker FM: sigma_y is ~ sqrt(2 ln 2) h_-1^(1/2); scale empirically to the level
    scale = np.std(np.diff(shaped)) / np.sqrt(2)
    return level * shaped / scale if scale > 0 else shaped


def projected_budget() -> tuple[NoiseBudget, ClockSettings]:
    """Improved operation: shielding, shallower trap, shot-noise-limited detection, 6 s cycle."""
    budget = NoiseBudget(
        static_field_offset=5 * MILLIGAUSS,
        field_jitter_rms=0.1 * MILLIGAUSS,
        atom_number_fractional_rms=0.04,
        detection_noise_atoms=0.0,
        atom_shot_noise=True,
        mean_density=1e11 / CM3 / 2**1.5,
    )
    return budget, ClockSettings(cycle_period=6.0)


# --- Allan deviation -------------------------------------------------------------


@dataclass(frozen=True)
class AllanResult:
    taus: np.ndarray  # s
    sigma: np.ndarray
    estimator: str  # "overlapping" or "non-overlapping"
    counts: np.ndarray  # number of difference terms per tau
    n_samples: int = 0
    cycle_period: float = 1.0


def allan_deviation(y, cycle_period: float, taus=None, overlapping: bool = True) -> AllanResult:
    """Allan deviation of per-cycle fractional frequencies ``y``.

    ``taus`` must be integer multiples of ``cycle_period``; by default
    octave-spaced values up to a quarter of the record are used.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2:
        raise ValueError("need at least two samples")
    if taus is None:
        ms = 2 ** np.arange(int(np.log2(max(n // 4, 1))) + 1)
    else:
        ratio = np.asarray(taus, dtype=float) / cycle_period
        ms = np.rint(ratio).astype(int)
        if np.any(np.abs(ratio - ms) > 1e-9 * np.maximum(ratio, 1)) or np.any(ms < 1):
            raise ValueError("taus must be positive multiples of the cycle period")
    # referencing to the first sample keeps constant series exactly zero
    cum = np.concatenate([[0.0], np.cumsum(y - y[0])])
    sig, counts = [], []
    for m in ms:
        if n < 2 * m:
            raise ValueError(f"insufficient data for tau = {m * cycle_period} s")
        if overlapping:
            avg = (cum[m:] - cum[:-m]) / m
            d = avg[m:] - avg[:-m]
        else:
            blocks = y[: (n // m) * m].reshape(-1, m).mean(axis=1)
            d = np.diff(blocks)
        sig.append(np.sqrt(0.5 * np.mean(d**2)))
        counts.append(len(d))
    return AllanResult(
        taus=ms * float(cycle_period),
        sigma=np.asarray(sig),
        estimator="overlapping" if overlapping else "non-overlapping",
        counts=np.asarray(counts),
        n_samples=n,
        cycle_period=float(cycle_period),
    )


@dataclass(frozen=True)
class StabilityFit:
    coefficient: float  # a in a tau^-1/2
    fit_range: tuple
    departure_tau: float | None
    n_points: int


def fit_stability(allan: AllanResult, fit_range=None) -> StabilityFit:
    """Fit sigma = a tau^-1/2 over ``fit_range`` and find where the data depart.

    The scatter of each point is taken as sigma / sqrt(N / m) with m the
    averaging factor; departure is the first tau above the fit range start
    where the data exceed the fit by more than three times that scatter.
    """
    taus, sigma = allan.taus, allan.sigma
    lo, hi = fit_range if fit_range is not None else (taus.min(), taus.max())
    sel = (taus >= lo) & (taus <= hi) & (sigma > 0)
    if sel.sum() < 3:
        raise ValueError("need at least three tau points in the fit range")
    log_a = np.mean(np.log(sigma[sel]) + 0.5 * np.log(taus[sel]))
    a = float(np.exp(log_a))
    model = a / np.sqrt(taus)
    m = taus / allan.cycle_period
    scatter = sigma / np.sqrt(np.maximum(allan.n_samples / m, 1.0))
    departure = None
    for k in np.flatnonzero(taus >= lo):
        if sigma[k] - model[k] > 3 * scatter[k]:
            departure = float(taus[k])
            break
    return StabilityFit(coefficient=a, fit_range=(float(lo), float(hi)), departure_tau=departure, n_points=int(sel.sum()))


def field_noise_rms(budget: NoiseBudget, beta: float | None = None) -> float:
    """Closed-form rms of beta((B_off + dB)^2 - B_off^2) for Gaussian dB (Hz)."""
    beta = quadratic_coefficient() if beta is None else beta
    b, s = budget.static_field_offset, budget.field_jitter_rms
    return float(beta * np.sqrt(4 * b**2 * s**2 + 2 * s**4))

