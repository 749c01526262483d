"""Static magnetic fields of filamentary chip wires plus a homogeneous bias.

Positions are in metres and fields in tesla. Points may be given as a
single 3-vector or as an array of shape ``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .constants import GAUSS, MICROMETER, MILLIAMPERE, RB87
from .hyperfine import HyperfineState

MU0_OVER_4PI = RB87.vacuum_permeability / (4 * np.pi)
EXCLUSION_RADIUS = 0.1 * MICROMETER
HESSIAN_STEP = 10e-9  # m


class SingularityError(ValueError):
    """Field requested inside the exclusion zone around a wire."""

    def __init__(self, message, segment_index=None):
        super().__init__(message)
        self.segment_index = segment_index


def as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    return v


@dataclass(frozen=True)
class WireSegment:
    """Straight filament carrying ``current`` (A) from ``start`` to ``end``."""

    start: np.ndarray
    end: np.ndarray
    current: float

    def __post_init__(self):
        object.__setattr__(self, "start", as_vec3(self.start))
        object.__setattr__(self, "end", as_vec3(self.end))
        if np.allclose(self.start, self.end, rtol=0, atol=1e-15):
            raise ValueError("segment start and end coincide")
        if not abs(self.current) < 100:
            raise ValueError(f"segment current {self.current} A outside sanity bound")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    def with_current(self, current: float) -> "WireSegment":
        return replace(self, current=current)

    def translated(self, offset) -> "WireSegment":
        offset = as_vec3(offset)
        return replace(self, start=self.start + offset, end=self.end + offset)


def _distance_to_segment(seg: WireSegment, points: np.ndarray) -> np.ndarray:
    axis = seg.end - seg.start
    t = np.clip(((points - seg.start) @ axis) / (axis @ axis), 0.0, 1.0)
    closest = seg.start + t[..., None] * axis
    return np.linalg.norm(points - closest, axis=-1)


def _segment_terms(seg: WireSegment, points: np.ndarray, index=None):
    """Return (L x r1, f, r1, r2, a, b, s) for the closed-form segment field."""
    dist = _distance_to_segment(seg, points)
    if np.any(dist < EXCLUSION_RADIUS):
        where = "" if index is None else f" {index}"
        raise SingularityError(
            f"point within {EXCLUSION_RADIUS:.1e} m of wire segment{where}",
            segment_index=index,
        )
    r1 = points - seg.start
    r2 = points - seg.end
    a = np.linalg.norm(r1, axis=-1)
    b = np.linalg.norm(r2, axis=-1)
    s = np.einsum("...i,...i->...", r1, r2)
    axis = seg.end - seg.start
    cross = np.cross(axis, r1)
    ab = a * b
    # ab + s cancels when r1 and r2 are nearly antiparallel (beside a long
    # segment); there use ab + s = |L x r1|^2 / (ab - s)
    cross2 = np.einsum("...i,...i->...", cross, cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        ab_plus_s = np.where(s < 0, cross2 / (ab - s), ab + s)
    f = (a + b) / (ab * ab_plus_s)
    return cross, f, r1, r2, a, b, s


def segment_field(segment: WireSegment, point, _index=None) -> np.ndarray:
    """Biot-Savart field (T) of a finite straight segment."""
    points = np.asarray(point, dtype=float)
    cross, f, *_ = _segment_terms(segment, points, _index)
    return MU0_OVER_4PI * segment.current * cross * f[..., None]


def segment_jacobian(segment: WireSegment, point, _index=None) -> np.ndarray:
    """Analytic dB_i/dx_j (T/m) of a finite segment; shape ``(..., 3, 3)``."""
    points = np.asarray(point, dtype=float)
    cross, f, r1, r2, a, b, s = _segment_terms(segment, points, _index)
    axis = segment.end - segment.start
    da = r1 / a[..., None]
    db = r2 / b[..., None]
    ds = r1 + r2
    ab = (a * b)[..., None]
    denom = ((a + b) / f)[..., None]  # D = a^2 b^2 + a b s, computed stably
    d_denom = (
        (2 * a * b**2 + b * s)[..., None] * da
        + (2 * a**2 * b + a * s)[..., None] * db
        + ab * ds
    )
    df = ((da + db) * denom - (a + b)[..., None] * d_denom) / denom**2
    # d(L x r1)_i/dx_j = (L x e_j)_i
    cross_jac = np.cross(axis, np.eye(3)).T  # [i, j]
    jac = cross_jac * f[..., None, None] + cross[..., :, None] * df[..., None, :]
    return MU0_OVER_4PI * segment.current * jac


@dataclass(frozen=True)
class ChipLayout:
    """Wire segments, a homogeneous bias field and the chip-surface geometry.

    ``surface_height`` is the position of the chip surface along
    ``surface_normal``; ``wire_depth`` is h_e, the depth of the current
    layer below that surface.
    """

    segments: tuple = ()
    bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    surface_height: float = 0.0
    surface_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    wire_depth: float = 0.0
    gravity_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    parameters: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "bias", as_vec3(self.bias))
        normal = as_vec3(self.surface_normal)
        object.__setattr__(self, "surface_normal", normal / np.linalg.norm(normal))
        g = as_vec3(self.gravity_direction)
        object.__setattr__(self, "gravity_direction", g / np.linalg.norm(g))
        if not self.segments and not np.any(self.bias):
            raise ValueError("layout needs at least one segment or a non-zero bias")
        if self.wire_depth < 0:
            raise ValueError("wire_depth must be >= 0")

    def with_bias(self, bias) -> "ChipLayout":
        return replace(self, bias=as_vec3(bias))

    def with_bias_component(self, axis: int, value: float) -> "ChipLayout":
        bias = self.bias.copy()
        bias[axis] = value
        return replace(self, bias=bias)

    def __add__(self, other: "ChipLayout") -> "ChipLayout":
        return replace(self, segments=self.segments + other.segments, bias=self.bias + other.bias)

    def translated(self, offset) -> "ChipLayout":
        offset = as_vec3(offset)
        return replace(
            self,
            segments=tuple(s.translated(offset) for s in self.segments),
            surface_height=self.surface_height + offset @ self.surface_normal,
        )

    def reversed_currents(self) -> "ChipLayout":
        return replace(self, segments=tuple(s.with_current(-s.current) for s in self.segments))

    def distance_to_surface(self, point) -> float:
        return float(np.asarray(point) @ self.surface_normal - self.surface_height)


@dataclass(frozen=True)
class FieldSample:
    b: np.ndarray
    jacobian: np.ndarray
    hessian_of_magnitude: np.ndarray
    magnitude: float

    @property
    def gradient_of_magnitude(self) -> np.ndarray:
        return self.jacobian.T @ self.b / self.magnitude


def field_vector(layout: ChipLayout, point) -> np.ndarray:
    """B (T) at ``point``; broadcasts over leading axes of ``point``."""
    points = np.asarray(point, dtype=float)
    total = np.broadcast_to(layout.bias, points.shape).copy()
    for i, seg in enumerate(layout.segments):
        total += segment_field(seg, points, i)
    return total


def field_jacobian(layout: ChipLayout, point) -> np.ndarray:
    """dB_i/dx_j (T/m), shape ``(..., 3, 3)``."""
    points = np.asarray(point, dtype=float)
    jac = np.zeros(points.shape + (3,))
    for i, seg in enumerate(layout.segments):
        jac += segment_jacobian(seg, points, i)
    return jac


def field_magnitude(layout: ChipLayout, point):
    return np.linalg.norm(field_vector(layout, point), axis=-1)


def magnitude_gradient(layout: ChipLayout, point) -> np.ndarray:
    """Analytic gradient of |B| (T/m)."""
    b = field_vector(layout, point)
    jac = field_jacobian(layout, point)
    mag = np.linalg.norm(b, axis=-1)
    return np.einsum("...ij,...i->...j", jac, b) / mag[..., None]


def magnitude_hessian(layout: ChipLayout, point, step: float = HESSIAN_STEP) -> np.ndarray:
    """Hessian of |B| (T/m^2) by central differences of the analytic gradient."""
    point = as_vec3(point)
    offsets = np.eye(3) * step
    stencil = np.concatenate([point + offsets, point - offsets])
    grads = magnitude_gradient(layout, stencil)
    hess = (grads[:3] - grads[3:]) / (2 * step)
    return 0.5 * (hess + hess.T)


def total_field(layout: ChipLayout, point) -> FieldSample:
    """Field, Jacobian and Hessian of |B| at a single point."""
    point = as_vec3(point)
    b = field_vector(layout, point)
    return FieldSample(
        b=b,
        jacobian=field_jacobian(layout, point),
        hessian_of_magnitude=magnitude_hessian(layout, point),
        magnitude=float(np.linalg.norm(b)),
    )


@dataclass(frozen=True)
class PotentialValue:
    energy_hz: float
    trappable: bool


def trapping_potential(
    layout: ChipLayout,
    point,
    state: HyperfineState,
    gravity_on: bool = False,
    constants=RB87,
):
    """Linear-Zeeman plus optional gravitational potential, U/h in Hz.

    Returns a :class:`PotentialValue`; ``trappable`` is False for states
    with m_F g_F <= 0.
    """
    points = np.asarray(point, dtype=float)
    energy = state.moment * constants.bohr_hz_per_tesla * field_magnitude(layout, points)
    if gravity_on:
        height = -(points @ layout.gravity_direction)
        energy = energy + constants.rb87_mass * constants.gravity * height / constants.planck
    return PotentialValue(energy_hz=energy, trappable=state.trappable)


# --- layout files -----------------------------------------------------------


def _vec(values, scale, name):
    if values is None:
        return np.zeros(3)
    try:
        v = np.asarray([float(x) for x in values]) * scale
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: expected three numbers") from exc
    if v.shape != (3,):
        raise ValueError(f"{name}: expected three numbers")
    return v


def _offset_polyline(path, offset, normal):
    """Shift a polyline sideways by ``offset`` within the plane normal to ``normal``."""
    if offset == 0:
        return path
    directions = np.diff(path, axis=0)
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    side = np.cross(normal, directions)
    shifted = np.empty_like(path)
    shifted[0] = path[0] + offset * side[0]
    shifted[-1] = path[-1] + offset * side[-1]
    for k in range(1, len(path) - 1):
        n1, n2 = side[k - 1], side[k]
        shifted[k] = path[k] + offset * (n1 + n2) / (1 + n1 @ n2)
    return shifted


def layout_from_dict(data: dict) -> ChipLayout:
    """Build a layout from the documented file schema (um, mA, G).

    Schema::

        wire_depth_um: 27.1            # h_e
        surface_height_um: 0.0
        surface_normal: [0, 0, 1]
        bias_G: [-2.18, -5.50, 0.0]
        currents_mA: {I0: 500, ...}    # named currents, optional
        wires:
          - name: I0
            current: I0                # name from currents_mA, or a number in mA
            path_um: [[x, y, z], ...]  # polyline, one segment per edge
            width_um: 0                # optional: split into parallel filaments
            filaments: 5               #   spread evenly over this width
        adjustable: {...}              # optional, read by trapchar
    """
    currents = {k: float(v) for k, v in (data.get("currents_mA") or {}).items()}
    normal = _vec(data.get("surface_normal", [0, 0, 1]), 1.0, "surface_normal")
    normal = normal / np.linalg.norm(normal)
    segments = []
    for n, wire in enumerate(data.get("wires") or []):
        label = wire.get("name", f"wire {n}")
        raw = wire.get("current")
        if isinstance(raw, str):
            if raw not in currents:
                raise ValueError(f"wires[{n}] ({label}): unknown current name {raw!r}")
            value = currents[raw]
        else:
            try:
                value = float(raw)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"wires[{n}] ({label}): current must be a name or mA value") from exc
        sign = float(wire.get("sign", 1.0))
        path = np.asarray(wire["path_um"], dtype=float) * MICROMETER
        if path.ndim != 2 or path.shape[1] != 3 or len(path) < 2:
            raise ValueError(f"wires[{n}] ({label}): path_um must list >= 2 points")
        width = float(wire.get("width_um", 0.0)) * MICROMETER
        count = int(wire.get("filaments", 1 if width == 0 else 5))
        offsets = np.linspace(-width / 2, width / 2, count) if count > 1 else [0.0]
        for offset in offsets:
            filament = _offset_polyline(path, offset, normal)
            for p, q in zip(filament[:-1], filament[1:]):
                segments.append(WireSegment(p, q, sign * value * MILLIAMPERE / count))
    return ChipLayout(
        segments=segments,
        bias=_vec(data.get("bias_G"), GAUSS, "bias_G"),
        surface_height=float(data.get("surface_height_um", 0.0)) * MICROMETER,
        surface_normal=normal,
        wire_depth=float(data.get("wire_depth_um", 0.0)) * MICROMETER,
        gravity_direction=_vec(data.get("gravity_direction", [0, 0, -1]), 1.0, "gravity_direction"),
        parameters={"source": data},
    )


def load_layout(path) -> ChipLayout:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: layout file must be a mapping")
    return layout_from_dict(data)


BUNDLED_LAYOUT = Path(__file__).parent / "data" / "chip_layout.yaml"


def bundled_layout() -> ChipLayout:
    """The approximate measurement-trap layout shipped with the package."""
    return load_layout(BUNDLED_LAYOUT)
