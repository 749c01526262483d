"""Command-line front end: ``chipclock <subcommand> --config run.yaml``.

Exit status is 0 on success, 1 for configuration errors and 2 for errors
raised by the physics modules.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import clock as clk
from . import coherence as coh
from . import ensemble as ens
from . import mwnearfield as mw
from .config import ConfigError, RunConfig, parse_quantity
from .constants import CM3, CONSTANTS_TABLE_VERSION, GAUSS, MICROMETER, write_constants_table
from .fieldmap import WireSegment, bundled_layout, field_vector, load_layout, magnitude_gradient
from .hyperfine import STATE_0, STATE_1, HyperfineState, magic_field, quadratic_coefficient, transition_frequency
from .trapchar import (
    calibrate_bias,
    find_minimum,
    harmonic_trap,
    place_at_distance,
    potential_slice,
)

SUBCOMMANDS = ("field", "trap", "calibrate", "ensemble", "ramsey", "clock", "allan", "mw")
THREADS_ENV = "CHIPCLOCK_THREADS"


# --- output helpers ------------------------------------------------------------


class Output:
    """Writes artifacts with a provenance header into one directory."""

    def __init__(self, directory: Path, subcommand: str, cfg: RunConfig, seed: int):
        self.directory = directory
        self.header = [
            f"chipclock {subcommand}",
            f"scenario: {cfg.scenario}",
            f"config_hash: {cfg.config_hash}",
            f"seed: {seed}",
            f"constants_version: {CONSTANTS_TABLE_VERSION}",
        ]
        self.files: list[Path] = []

    def _open(self, name):
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / name
        self.files.append(path)
        return path

    def csv(self, name, columns, rows, extra_header=()):
        path = self._open(name)
        lines = [f"# {h}" for h in (*self.header, *extra_header)]
        lines.append(",".join(columns))
        data = np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else np.empty((0, len(columns)))
        for row in data:
            lines.append(",".join(_fmt(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        return path

    def record(self, name, values: dict):
        path = self._open(name)
        lines = [f"# {h}" for h in self.header]
        for key, value in values.items():
            lines.append(f"{key} = {_fmt(value)}")
        path.write_text("\n".join(lines) + "\n")
        return path


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(_fmt(v) for v in np.ravel(value))
    return str(value)


def read_csv(path) -> tuple[dict, list, np.ndarray]:
    """Read an artifact CSV: returns (header dict, column names, data)."""
    header, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition(": ")
            if sep:
                header[key] = value
        elif columns is None:
            columns = line.split(",")
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, len(columns or []))
    return header, columns or [], data


def read_record(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


# --- shared config pieces ----------------------------------------------------------


def _layout(cfg: RunConfig):
    path = cfg.layout_path
    return bundled_layout() if path is None else load_layout(path)


def _layout_adjustable(cfg: RunConfig, layout):
    return (layout.parameters.get("source") or {}).get("adjustable") or {}


def _state(section, key="state", default="0"):
    value = section.raw(key, default)
    names = {"0": STATE_0, "|0>": STATE_0, "1": STATE_1, "|1>": STATE_1}
    if isinstance(value, int) and not isinstance(value, bool):
        value = str(value)
    if isinstance(value, str) and value in names:
        return names[value]
    if isinstance(value, (list, tuple)) and len(value) == 2:
        try:
            return HyperfineState(int(value[0]), int(value[1]))
        except (TypeError, ValueError) as exc:
            raise section.config.error(section.path(key), str(exc)) from None
    raise section.config.error(section.path(key), f"unknown state {value!r}; use 0, 1 or [F, mF]")


def _trap_from_layout(cfg: RunConfig, sec, calibrate: bool):
    layout = _layout(cfg)
    adjustable = _layout_adjustable(cfg, layout)
    seed = sec.quantities("seed_point", "length", length=3)
    if seed is None and "seed_um" in adjustable:
        seed = np.asarray(adjustable["seed_um"], dtype=float) * MICROMETER
    state = _state(sec)
    analysis = find_minimum(layout, state, seed, cfg.gravity)
    axis = sec.choice("free_axis", ("x", "y", "z"), adjustable.get("calibrate_axis", "x"))
    if calibrate:
        target = sec.raw("target_b0", "magic")
        target_b0 = None if target == "magic" else sec.quantity("target_b0", "field")
        layout, analysis = calibrate_bias(layout, state, analysis.minimum_position, axis, target_b0, cfg.gravity)
    return layout, analysis


def _analysis_record(a) -> dict:
    return {
        "state": str(a.state),
        "minimum_x_um": a.minimum_position[0] / MICROMETER,
        "minimum_y_um": a.minimum_position[1] / MICROMETER,
        "minimum_z_um": a.minimum_position[2] / MICROMETER,
        "b_min_G": a.b_min / GAUSS,
        "f1_Hz": a.frequencies[0],
        "f2_Hz": a.frequencies[1],
        "f3_Hz": a.frequencies[2],
        "axis1": a.principal_axes[:, 0],
        "axis2": a.principal_axes[:, 1],
        "axis3": a.principal_axes[:, 2],
        "distance_d_um": a.distance_d / MICROMETER,
        "distance_dw_um": a.distance_dw / MICROMETER,
        "gradient_norm_T_per_m": a.gradient_norm,
        "iterations": a.iterations,
        "gravity": a.gravity_on,
    }


def _grid(sec, key="grid"):
    g = sec.sub(key)
    axes = []
    for name in ("x", "y", "z"):
        spec = g.raw(name, [0.0, 0.0, 1])
        if not isinstance(spec, list) or len(spec) != 3:
            raise sec.config.error(g.path(name), "expected [start, stop, count]")
        try:
            start = parse_quantity(spec[0], "length", g.path(name))
            stop = parse_quantity(spec[1], "length", g.path(name))
        except ConfigError as exc:
            raise sec.config.error(g.path(name), str(exc).split(": ", 1)[1]) from None
        count = spec[2]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise sec.config.error(g.path(name), "count must be a positive integer")
        axes.append(np.linspace(start, stop, count))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _parallel_map(func, items, threads):
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(np.asarray(items), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(func, chunks))
        return np.concatenate(parts)
    return func(np.asarray(items))


# --- subcommands ------------------------------------------------------------------------


def cmd_field(cfg, out, seed, threads):
    layout = _layout(cfg)
    sec = cfg.section("field")
    points = _grid(sec)
    cfg.check_unknown()
    b = _parallel_map(lambda p: field_vector(layout, p), points, threads)
    grad = _parallel_map(lambda p: magnitude_gradient(layout, p), points, threads)
    rows = np.column_stack([points / MICROMETER, b / GAUSS, np.linalg.norm(b, axis=1) / GAUSS, grad])
    out.csv(
        "field.csv",
        ["x_um", "y_um", "z_um", "Bx_G", "By_G", "Bz_G", "B_G", "dBdx_T_per_m", "dBdy_T_per_m", "dBdz_T_per_m"],
        rows,
    )


def cmd_trap(cfg, out, seed, threads):
    sec = cfg.section("trap")
    calibrate = sec.boolean("calibrate", False)
    half = sec.quantity("slice_half_width", "length", "20 um")
    n = sec.integer("slice_points", 101, minimum=3)
    layout, analysis = _trap_from_layout(cfg, sec, calibrate)
    cfg.check_unknown()
    out.record("trap.txt", _analysis_record(analysis))
    rows = []
    for k in range(3):
        offsets, energy = potential_slice(layout, analysis, analysis.principal_axes[:, k], half, n)
        rows += [[k + 1, o / MICROMETER, e] for o, e in zip(offsets, energy)]
    out.csv("trap_slice.csv", ["axis", "offset_um", "U_Hz"], rows)


def cmd_calibrate(cfg, out, seed, threads):
    sec = cfg.section("calibrate")
    distance = sec.quantity("distance", "length")
    layout, analysis = _trap_from_layout(cfg, sec, calibrate=True)
    if distance is not None:
        adjustable = _layout_adjustable(cfg, layout)
        parameter = sec.string("parameter", adjustable.get("distance_parameter"))
        bounds = sec.quantities("bounds", "current" if str(parameter).startswith("current") else "field", length=2)
        if bounds is None and "distance_bounds_mA" in adjustable:
            bounds = np.asarray(adjustable["distance_bounds_mA"], dtype=float) * 1e-3
        if parameter is None or bounds is None:
            raise cfg.error("calibrate.distance", "layout declares no adjustable distance parameter")
        cfg.check_unknown()
        layout, analysis = place_at_distance(
            layout,
            distance,
            parameter,
            tuple(bounds),
            analysis.state,
            analysis.minimum_position,
            calibrate_axis=sec.data.get("free_axis", adjustable.get("calibrate_axis", "x")),
        )
    cfg.check_unknown()
    b0 = magic_field()
    beta = quadratic_coefficient()
    record = {
        "magic_field_G": b0 / GAUSS,
        "quadratic_coefficient_Hz_per_G2": beta * GAUSS**2,
        "nu10_at_B0_Hz": float(transition_frequency(b0)),
        "bias_x_G": layout.bias[0] / GAUSS,
        "bias_y_G": layout.bias[1] / GAUSS,
        "bias_z_G": layout.bias[2] / GAUSS,
        "residual_shift_Hz": beta * (analysis.b_min - b0) ** 2,
    }
    source = layout.parameters.get("source") or {}
    for name, value in (source.get("currents_mA") or {}).items():
        record[f"current_{name}_mA"] = float(value)
    record.update(_analysis_record(analysis))
    out.record("calibrate.txt", record)


def _ensemble_from_config(cfg, sec, seed):
    n_atoms = sec.number("atom_number", 1.5e4, minimum=1)
    temperature = sec.quantity("temperature", "temperature", "0.6 uK")
    samples = sec.integer("samples", 10_000, minimum=1)
    freqs = sec.quantities("frequencies", "frequency", length=3)
    k_coll = sec.quantity("collisional_coefficient", "collision", ens.DEFAULT_COLLISIONAL_COEFFICIENT)
    mode = sec.choice("averaging_mode", ("frozen", "trajectory"), cfg.averaging_mode)
    b_offset = sec.quantity("field_offset", "field", 0.0)
    if freqs is not None:
        trap = harmonic_trap(freqs, magic_field() + b_offset)
        layout = None
    else:
        layout, trap = _trap_from_layout(cfg, sec.sub("trap"), calibrate=True)
    ensemble = ens.sample_thermal(trap, temperature, samples, seed=seed, atom_count=n_atoms)
    model = ens.ShiftModel(collisional_coefficient=k_coll, averaging_mode=mode)
    return ens.assign_shifts(ensemble, layout, model)


def cmd_ensemble(cfg, out, seed, threads):
    sec = cfg.section("ensemble")
    ensemble = _ensemble_from_config(cfg, sec, seed)
    cfg.check_unknown()
    rows = np.column_stack([ensemble.positions / MICROMETER, ensemble.local_shift])
    out.csv("ensemble.csv", ["x_um", "y_um", "z_um", "shift_Hz"], rows)
    summary = ensemble.summary()
    sigma = ens.thermal_widths(ensemble.trap.frequencies, ensemble.temperature)
    summary.update({f"sigma{k + 1}_um": s / MICROMETER for k, s in enumerate(sigma)})
    summary.update({f"f{k + 1}_Hz": f for k, f in enumerate(ensemble.trap.frequencies)})
    out.record("ensemble_summary.txt", summary)


def _shifts(cfg, sec, seed):
    from scipy.stats import cauchy, norm

    kind = sec.choice("source", ("none", "gaussian", "lorentzian", "ensemble"), "none")
    count = sec.integer("count", 10_000, minimum=1)
    mean = sec.quantity("mean", "frequency", 0.0)
    sampling = sec.choice("sampling", ("quantile", "random"), "quantile")
    if kind == "none":
        return np.zeros(1)
    if kind == "ensemble":
        return _ensemble_from_config(cfg, sec.sub("ensemble"), seed).local_shift
    if sampling == "quantile":
        u = (np.arange(count) + 0.5) / count
    else:
        u = np.random.default_rng(seed).random(count)
    if kind == "gaussian":
        sigma = sec.quantity("sigma", "frequency")
        if sigma is None:
            raise cfg.error(sec.path("sigma"), "required for gaussian shifts")
        return mean + sigma * norm.ppf(u)
    hwhm = sec.quantity("hwhm", "frequency")
    if hwhm is None:
        raise cfg.error(sec.path("hwhm"), "required for lorentzian shifts")
    return mean + hwhm * cauchy.ppf(u)


def cmd_ramsey(cfg, out, seed, threads):
    sec = cfg.section("ramsey")
    axis = sec.choice("axis", ("time", "frequency"), "time")
    scan = sec.sub("scan")
    kind = "time" if axis == "time" else "frequency"
    start = scan.quantity("start", kind, 0.0)
    stop = scan.quantity("stop", kind)
    points = scan.integer("points", 120, minimum=1)
    if stop is None:
        raise cfg.error(scan.path("stop"), "required")
    sequence = coh.PulseSequence(
        rabi_frequency=sec.quantity("rabi_frequency", "frequency", "500 Hz"),
        hold_before=sec.quantity("hold_before", "time", 0.0),
        ramsey_delay=sec.quantity("ramsey_delay", "time", "1 s"),
        detuning_offset=sec.quantity("detuning", "frequency", 0.0),
    )
    ideal = sec.boolean("ideal_pulses", True)
    atoms = sec.number("atom_total", 1.5e4, minimum=0)
    shifts = _shifts(cfg, sec.sub("shifts"), seed)
    decay_sec = sec.sub("decay")
    decay, distance = None, None
    if decay_sec.boolean("enabled", False):
        decay = coh.DecayModel(
            state1_factor=decay_sec.number("state1_factor", 0.5),
            constant_total_time=decay_sec.boolean("constant_total_time", True),
            total_time=decay_sec.quantity("total_time", "time"),
        )
        distance = decay_sec.quantity("distance", "length", "9 um")
    noise = sec.sub("noise")
    detection = noise.number("detection_atoms", 0.0, minimum=0)
    common = noise.quantity("common_shift_rms", "frequency", 0.0)
    fit_kind = sec.choice("fit", ("damped_sine", "contrast", "none"), "damped_sine" if axis == "time" else "contrast")
    bootstrap = sec.integer("bootstrap", 0, minimum=0)
    cfg.check_unknown()
    values = np.linspace(start, stop, points)
    run = coh.ramsey_ensemble(
        shifts, sequence, axis, values, atoms, decay, distance, ideal, detection, common, seed
    )
    out.csv(
        "ramsey.csv",
        ["T_R_s" if axis == "time" else "Delta_R_Hz", "N1", "N0", "N1_clean", "N0_clean"],
        np.column_stack([values, run.n1, run.n0, run.n1_clean, run.n0_clean]),
    )
    record = {"scan_axis": axis, "points": points, "atom_total": atoms}
    if fit_kind == "damped_sine":
        fit = coh.fit_damped_sine(values, run.n1, bootstrap=bootstrap, seed=seed)
        record.update(
            amplitude=fit.amplitude,
            frequency_Hz=fit.frequency,
            phase_rad=fit.phase,
            offset=fit.offset,
            decay_time_s=fit.decay_time,
            decay_time_err_s=fit.uncertainties["decay_time"],
            frequency_err_Hz=fit.uncertainties["frequency"],
            residual_rms=fit.residual_rms,
            lower_bound=fit.lower_bound,
        )
        if fit.decay_time_limit is not None:
            record["decay_time_limit_s"] = fit.decay_time_limit
        if fit.bootstrap_std is not None:
            record["decay_time_bootstrap_std_s"] = fit.bootstrap_std
    elif fit_kind == "contrast":
        if axis == "frequency":
            period = 1 / sequence.ramsey_delay
        else:
            period = 1 / abs(sequence.detuning_offset) if sequence.detuning_offset else None
            if period is None:
                raise ConfigError("ramsey.fit: contrast of a time scan needs a non-zero detuning")
        c = coh.contrast(values, run.n1, period)
        record.update(
            contrast=c.contrast,
            amplitude=c.amplitude,
            offset=c.offset,
            phase_rad=c.phase,
            period=c.period,
            signal_to_noise=c.signal_to_noise,
            residual_std=c.residual_std,
        )
    out.record("ramsey_fit.txt", record)


def cmd_clock(cfg, out, seed, threads):
    sec = cfg.section("clock")
    shots = sec.integer("shots", 10_000, minimum=1)
    b = sec.sub("budget")
    default = clk.NoiseBudget()
    budget = clk.NoiseBudget(
        static_field_offset=b.quantity("static_field_offset", "field", default.static_field_offset),
        field_jitter_rms=b.quantity("field_jitter_rms", "field", default.field_jitter_rms),
        atom_number_fractional_rms=b.number("atom_number_fractional_rms", default.atom_number_fractional_rms),
        detection_noise_atoms=b.number("detection_noise_atoms", default.detection_noise_atoms),
        atom_shot_noise=b.boolean("atom_shot_noise", default.atom_shot_noise),
        mean_density=b.quantity("peak_density", "density", 1e12 / CM3) / 2**1.5,
        collisional_coefficient=b.quantity("collisional_coefficient", "collision", default.collisional_coefficient),
    )
    white = sec.quantity("white_fm_rms", "frequency")
    defaults = clk.ClockSettings()
    settings = clk.ClockSettings(
        atom_number=sec.number("atom_number", defaults.atom_number, minimum=0),
        contrast=sec.number("contrast", defaults.contrast),
        ramsey_delay=sec.quantity("ramsey_delay", "time", defaults.ramsey_delay),
        cycle_period=sec.quantity("cycle_period", "time", defaults.cycle_period),
        operating_phase=sec.number("operating_phase", defaults.operating_phase),
        normalise=sec.boolean("normalise", defaults.normalise),
        white_fm_rms=white,
    )
    d = sec.sub("drift")
    drift = clk.ReferenceDrift(
        linear_rate=d.number("linear_rate", 0.0),
        onset=d.quantity("onset", "time", 0.0),
        flicker_level=d.number("flicker_level", 0.0, minimum=0),
    )
    cfg.check_unknown()
    series = clk.run_clock(budget, settings, shots, seed, drift)
    out.csv(
        "clock.csv",
        ["timestamp_s", "N1", "delta_nu_Hz"],
        np.column_stack([series.timestamps, series.n1, series.delta_nu]),
        extra_header=(f"cycle_period_s: {_fmt(series.cycle_period)}", f"nu10_Hz: {_fmt(series.nu10)}"),
    )
    out.record(
        "clock_summary.txt",
        {
            "shots": shots,
            "delta_nu_rms_Hz": float(np.std(series.delta_nu)),
            "true_delta_nu_rms_Hz": float(np.std(series.true_delta_nu)),
            "slope_atoms_per_Hz": series.metadata["slope_atoms_per_Hz"],
            "nu10_Hz": series.nu10,
        },
    )


def allan_from_csv(path, taus=None, overlapping=True):
    """Allan deviation of a ``clock.csv`` artifact."""
    header, columns, data = read_csv(path)
    if "delta_nu_Hz" not in columns or "timestamp_s" not in columns:
        raise ConfigError(f"{path}: not a clock time series (need timestamp_s, delta_nu_Hz)")
    t = data[:, columns.index("timestamp_s")]
    dnu = data[:, columns.index("delta_nu_Hz")]
    period = float(header["cycle_period_s"]) if "cycle_period_s" in header else float(np.median(np.diff(t)))
    nu10 = float(header["nu10_Hz"]) if "nu10_Hz" in header else float(transition_frequency(magic_field()))
    return clk.allan_deviation(dnu / nu10, period, taus, overlapping)


def cmd_allan(cfg, out, seed, threads, input_path=None):
    sec = cfg.section("allan")
    source = input_path or sec.string("input")
    if input_path is None and "input" in sec.data:
        source = cfg.resolve(source)
    if source is None:
        raise cfg.error("allan.input", "an input clock CSV is required (config or --input)")
    if not Path(source).is_file():
        raise cfg.error("allan.input", f"file not found: {source}")
    taus = sec.quantities("taus", "time")
    overlapping = sec.choice("estimator", ("overlapping", "non-overlapping"), "overlapping") == "overlapping"
    fit_range = sec.quantities("fit_range", "time", length=2)
    cfg.check_unknown()
    result = allan_from_csv(source, taus, overlapping)
    out.csv("allan.csv", ["tau_s", "sigma"], np.column_stack([result.taus, result.sigma]),
            extra_header=(f"estimator: {result.estimator}",))
    fit = clk.fit_stability(result, None if fit_range is None else tuple(fit_range))
    out.record(
        "allan_fit.txt",
        {
            "coefficient": fit.coefficient,
            "fit_range_s": fit.fit_range,
            "departure_tau_s": "none" if fit.departure_tau is None else fit.departure_tau,
            "points": fit.n_points,
            "samples": result.n_samples,
        },
    )


def cmd_mw(cfg, out, seed, threads):
    sec = cfg.section("mw")
    current_pp = sec.quantity("current_pp", "current", "20 mA")
    detuning = sec.quantity("detuning", "frequency", "50 MHz")
    static = sec.quantity("static_field", "field", "1 mG")
    threshold = sec.quantity("two_photon_threshold", "frequency", "1 MHz")
    wire = sec.sub("wire")
    start = wire.quantities("start", "length", [-0.01, 0.0, 0.0], length=3)
    end = wire.quantities("end", "length", [0.01, 0.0, 0.0], length=3)
    ref = sec.quantities("reference_point", "length", [0.0, 0.0, 1e-5], length=3)
    use_layout = sec.boolean("static_from_layout", False)
    points = _grid(sec) if sec.has("grid") else np.atleast_2d(ref)
    cfg.check_unknown()
    segment = WireSegment(start, end, mw.peak_from_peak_to_peak(current_pp))
    probe = mw.MwSource((segment,), 1.0)
    if use_layout:
        layout = _layout(cfg)
        b_ref = float(np.linalg.norm(field_vector(layout, ref)))
    else:
        direction = np.real(mw.mw_field_amplitude(probe, ref))
        direction = direction / np.linalg.norm(direction)
        from .fieldmap import ChipLayout

        layout = ChipLayout(segments=(), bias=static * direction)
        b_ref = static
    source = probe.with_frequency(mw.drive_frequency_for_detuning(detuning, b_ref))
    amap = mw.potential_map(source, layout, points, threshold, threads)
    fractions = amap.polarization_fractions
    rows = np.column_stack(
        [
            points / MICROMETER,
            amap.shift_0 / 1e3,
            amap.shift_1 / 1e3,
            amap.differential / 1e3,
            fractions,
            amap.mask,
            amap.two_photon_suppressed,
        ]
    )
    out.csv(
        "mw.csv",
        ["x_um", "y_um", "z_um", "U0_kHz", "U1_kHz", "Umw_kHz", "pi_frac", "sigma_plus_frac", "sigma_minus_frac", "valid", "two_photon_suppressed"],
        rows,
    )
    b_static = field_vector(layout, ref)
    pol = mw.polarization_components(mw.mw_field_amplitude(source, ref), b_static)
    bm = float(np.linalg.norm(b_static))
    s1 = STATE_1
    record = {
        "drive_frequency_Hz": source.frequency,
        "mw_amplitude_G": float(np.linalg.norm(mw.mw_field_amplitude(source, ref))) / GAUSS,
        "rabi_0_Hz": mw.transition_rabi(STATE_0, HyperfineState(2, -1), pol, bm),
        "rabi_1_Hz": mw.transition_rabi(HyperfineState(1, 1), s1, pol, bm),
        "U0_Hz": mw.level_shift(STATE_0, pol, bm, source.frequency).shift,
        "U1_Hz": mw.level_shift(s1, pol, bm, source.frequency).shift,
        "Umw_Hz": mw.differential_shift(source, ref, layout),
        "dressed_moment_0_muB": mw.dressed_moment_perturbation(STATE_0, source, ref, layout),
        "dressed_moment_1_muB": mw.dressed_moment_perturbation(s1, source, ref, layout),
        "masked_points": int((~amap.mask).sum()),
    }
    out.record("mw_summary.txt", record)


COMMANDS = {
    "field": cmd_field,
    "trap": cmd_trap,
    "calibrate": cmd_calibrate,
    "ensemble": cmd_ensemble,
    "ramsey": cmd_ramsey,
    "clock": cmd_clock,
    "allan": cmd_allan,
    "mw": cmd_mw,
}


# --- entry point ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chipclock", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (YAML)")
        p.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit), overrides the config")
        p.add_argument("--out", help="output directory, overrides the config")
        p.add_argument("--threads", type=int, help=f"worker threads (env {THREADS_ENV})")
        if name == "allan":
            p.add_argument("--input", help="clock CSV to analyse, overrides the config")
    return parser


def _threads(args, cfg) -> int:
    if args.threads is not None:
        value = args.threads
    elif os.environ.get(THREADS_ENV):
        try:
            value = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}: expected an integer, got {os.environ[THREADS_ENV]!r}") from None
    else:
        value = cfg.threads
    if value < 1:
        raise ConfigError("threads must be >= 1")
    return value


def run(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = RunConfig.load(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        threads = _threads(args, cfg)
        target = args.out or cfg.output_dir or f"chipclock-out/{cfg.scenario}"
        out = Output(Path(target), args.subcommand, cfg, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            if args.subcommand == "allan":
                cmd_allan(cfg, out, seed, threads, getattr(args, "input", None))
            else:
                COMMANDS[args.subcommand](cfg, out, seed, threads)
        write_constants_table(out.directory / "constants.txt")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # physics errors carry their module of origin
        module = type(exc).__module__
        tb = exc.__traceback__
        while tb is not None:
            name = tb.tb_frame.f_globals.get("__name__", "")
            if name.startswith("chipclock.") and name != "chipclock.cli":
                module = name
            tb = tb.tb_next
        print(f"physics error in {module}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for path in out.files:
        print(path)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
