"""Run configuration files: YAML with unit-suffixed quantities.

Quantities are written as ``"5 mG"``, ``"0.6 uK"``, ``"10 um"`` and so on;
bare numbers are taken in SI units. Every error names the offending field
and, when known, its line in the file.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

UNITS = {
    "field": {"T": 1.0, "mT": 1e-3, "uT": 1e-6, "G": 1e-4, "mG": 1e-7},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "current": {"A": 1.0, "mA": 1e-3, "uA": 1e-6, "mApp": 1e-3},
    "temperature": {"K": 1.0, "mK": 1e-3, "uK": 1e-6, "nK": 1e-9, "pK": 1e-12},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "frequency": {"Hz": 1.0, "mHz": 1e-3, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "density": {"m-3": 1.0, "cm-3": 1e6},
    "collision": {"Hz m3": 1.0, "Hz cm3": 1e-6},
}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; the message names the field (and line)."""


def parse_quantity(value, kind: str, where: str = "value") -> float:
    """Convert ``value`` (number or "number unit") to SI for ``kind``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a {kind} quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a {kind} quantity, got {value!r}")
    match = _NUMBER.match(value.replace("µ", "u").replace("μ", "u"))
    if not match:
        raise ConfigError(f"{where}: cannot parse {value!r} as a {kind} quantity")
    number, unit = float(match.group(1)), match.group(2)
    if unit == "":
        return number
    table = UNITS[kind]
    unit = " ".join(unit.split())
    if unit not in table:
        raise ConfigError(
            f"{where}: unknown unit {unit!r} for a {kind} quantity (accepted: {', '.join(table)})"
        )
    return number * table[unit]


def _line_index(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    index = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return index

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, val in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                index[path] = key.start_mark.line + 1
                walk(val, path)
        elif isinstance(node, yaml.SequenceNode):
            for k, val in enumerate(node.value):
                path = f"{prefix}[{k}]"
                index[path] = val.start_mark.line + 1
                walk(val, path)

    if root is not None:
        walk(root, "")
    return index


class Section:
    """Typed, tracked access to one mapping of the configuration."""

    def __init__(self, config: "RunConfig", name: str, data: dict | None):
        self.config = config
        self.name = name
        self.data = data or {}
        if not isinstance(self.data, dict):
            raise config.error(name, "must be a mapping")
        self.used: set = set()

    def path(self, key) -> str:
        return f"{self.name}.{key}" if self.name else str(key)

    def has(self, key) -> bool:
        return key in self.data

    def raw(self, key, default=None):
        self.used.add(key)
        return self.data.get(key, default)

    def quantity(self, key, kind, default=None):
        value = self.raw(key, default)
        if value is None:
            return None
        try:
            return parse_quantity(value, kind, self.path(key))
        except ConfigError as exc:
            raise self.config.error(self.path(key), str(exc).split(": ", 1)[1]) from None

    def quantities(self, key, kind, default=None, length=None):
        value = self.raw(key, default)
        if value is None:
            return None
        if not isinstance(value, (list, tuple)):
            raise self.config.error(self.path(key), "expected a list")
        if length is not None and len(value) != length:
            raise self.config.error(self.path(key), f"expected {length} entries")
        out = []
        for k, item in enumerate(value):
            try:
                out.append(parse_quantity(item, kind, f"{self.path(key)}[{k}]"))
            except ConfigError as exc:
                raise self.config.error(f"{self.path(key)}[{k}]", str(exc).split(": ", 1)[1]) from None
        return np.array(out)

    def number(self, key, default=None, minimum=None):
        value = self.raw(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.config.error(self.path(key), f"expected a number, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.config.error(self.path(key), f"must be >= {minimum}")
        return float(value)

    def integer(self, key, default=None, minimum=None):
        value = self.raw(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            else:
                raise self.config.error(self.path(key), f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.config.error(self.path(key), f"must be >= {minimum}")
        return int(value)

    def boolean(self, key, default=None):
        value = self.raw(key, default)
        if value is not None and not isinstance(value, bool):
            raise self.config.error(self.path(key), f"expected true/false, got {value!r}")
        return value

    def choice(self, key, options, default=None):
        value = self.raw(key, default)
        if value is not None and value not in options:
            raise self.config.error(self.path(key), f"must be one of {sorted(map(str, options))}, got {value!r}")
        return value

    def string(self, key, default=None):
        value = self.raw(key, default)
        if value is not None and not isinstance(value, str):
            raise self.config.error(self.path(key), f"expected a string, got {value!r}")
        return value

    def sub(self, key) -> "Section":
        self.used.add(key)
        section = Section(self.config, self.path(key), self.data.get(key))
        self.config._sections.append(section)
        return section

    def unknown(self) -> list:
        return [self.path(k) for k in self.data if k not in self.used]


TOP_LEVEL = {
    "scenario",
    "description",
    "subcommand",
    "seed",
    "output_dir",
    "threads",
    "layout",
    "physics",
    "field",
    "trap",
    "calibrate",
    "ensemble",
    "ramsey",
    "clock",
    "allan",
    "mw",
}


@dataclass
class RunConfig:
    path: Path | None
    data: dict
    lines: dict = field(default_factory=dict)
    _sections: list = field(default_factory=list, repr=False)

    # --- construction ---

    @classmethod
    def from_text(cls, text: str, path=None) -> "RunConfig":
        where = str(path) if path else "<config>"
        try:
            data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            line = f":{mark.line + 1}" if mark is not None else ""
            raise ConfigError(f"{where}{line}: YAML syntax error: {exc.problem}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{where}: YAML error: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: top level must be a mapping")
        cfg = cls(Path(path) if path else None, data, _line_index(text))
        for key in data:
            if key not in TOP_LEVEL:
                raise cfg.error(str(key), "unknown field")
        cfg.top = Section(cfg, "", data)
        cfg.top.used.update(TOP_LEVEL)
        cfg._validate_top()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        return cls.from_text(text, path)

    def _validate_top(self):
        seed = self.data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise self.error("seed", "must be an unsigned 64-bit integer")
        threads = self.data.get("threads", 1)
        if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
            raise self.error("threads", "must be a positive integer")
        layout = self.data.get("layout", "bundled")
        if not isinstance(layout, str):
            raise self.error("layout", "must be 'bundled' or a file path")
        if layout != "bundled" and not self.resolve(layout).is_file():
            raise self.error("layout", f"file not found: {layout}")
        physics = self.section("physics")
        physics.boolean("gravity", False)
        physics.choice("averaging_mode", ("frozen", "trajectory"), "trajectory")

    # --- helpers ---

    def error(self, field_path: str, message: str) -> ConfigError:
        where = str(self.path) if self.path else "<config>"
        line = self.lines.get(field_path)
        loc = f"{where}:{line}" if line else where
        return ConfigError(f"{loc}: {field_path}: {message}")

    def resolve(self, relative) -> Path:
        p = Path(relative)
        if p.is_absolute() or self.path is None:
            return p
        return self.path.parent / p

    def section(self, name) -> Section:
        s = Section(self, name, self.data.get(name))
        self._sections.append(s)
        return s

    def check_unknown(self):
        """Raise on keys no getter asked for (typos in the config)."""
        for s in self._sections:
            bad = s.unknown()
            if bad:
                raise self.error(bad[0], "unknown field")

    @property
    def scenario(self) -> str:
        return str(self.data.get("scenario", self.path.stem if self.path else "run"))

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self.data.get("threads", 1))

    @property
    def output_dir(self) -> str | None:
        return self.data.get("output_dir")

    @property
    def gravity(self) -> bool:
        return bool((self.data.get("physics") or {}).get("gravity", False))

    @property
    def averaging_mode(self) -> str:
        return (self.data.get("physics") or {}).get("averaging_mode", "trajectory")

    @property
    def layout_path(self) -> Path | None:
        layout = self.data.get("layout", "bundled")
        return None if layout == "bundled" else self.resolve(layout)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=str)
        return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()
