"""Unit-tagged run configuration.

The file format is line oriented::

    # comment
    run.mode = scan-density
    medium.density = 5e11 cm^-3
    medium.gamma_0 = 0.004 gamma_r

Physical quantities must carry a unit; counts, flags and choices must not.
Everything is stored in canonical units: densities in cm^-3, lengths in cm,
rates in units of gamma_r, frequencies in Hz (cyclic), fields in gauss.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, Optional, Tuple

from . import constants
from .errors import ConfigError

MODES = ("simulate-analytic", "simulate-multilevel", "scan-density", "fit", "threshold-report")

_FREQ = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}

UNITS: Dict[str, Dict[str, float]] = {
    "density": {"cm^-3": 1.0, "m^-3": 1e-6},
    "length": {"cm": 1.0, "mm": 0.1, "m": 100.0, "um": 1e-4, "nm": 1e-7},
    "frequency": dict(_FREQ, **{"rad/s": 1.0 / constants.TWO_PI}),
    "field": {"G": 1.0, "mG": 1e-3, "uG": 1e-6, "T": 1e4},
    "larmor": {"Hz/G": 1.0, "kHz/G": 1e3, "MHz/G": 1e6},
    "area": {"cm^2": 1.0, "m^2": 1e4},
    "temperature": {"K": 1.0},
}
# rates: gamma_r units directly, or absolute units converted through medium.gamma_r
RATE_UNITS = ("gamma_r",) + tuple(_FREQ) + ("rad/s", "s^-1")

CANONICAL_UNIT = {
    "density": "cm^-3",
    "length": "cm",
    "frequency": "Hz",
    "field": "G",
    "larmor": "Hz/G",
    "area": "cm^2",
    "temperature": "K",
    "rate": "gamma_r",
}


@dataclass(frozen=True)
class Key:
    kind: str
    default: Any
    choices: Tuple[str, ...] = ()
    optional: bool = False


SCHEMA: Dict[str, Key] = {
    "run.mode": Key("choice", None, MODES),
    "medium.density": Key("density", 1e12),
    "medium.wavelength": Key("length", constants.RB87_D1_WAVELENGTH_CM),
    "medium.gamma_r": Key("frequency", constants.GAMMA_R_HZ),
    "medium.gamma_0": Key("rate", 0.004),
    "medium.doppler_width": Key("rate", 100.0),
    "medium.length": Key("length", 5.0),
    "medium.beam_diameter": Key("length", 0.2),
    "medium.cell_diameter": Key("length", 2.5),
    "field.rabi_frequency": Key("rate", 30.0),
    "constants.bohr_magneton": Key("larmor", constants.BOHR_MAGNETON_HZ_PER_G),
    "trapping.n_threshold": Key("density", 5e10),
    "trapping.n_beam": Key("density", 5e11),
    "trapping.slope_low": Key("number", 0.4),
    "trapping.slope_high": Key("number", 0.4),
    "trapping.exponent": Key("number", 1.0),
    "trapping.density_scale": Key("density", 1e12),
    "trapping.escape_rate": Key("rate", 1.0),
    "trapping.cross_section": Key("area", 2e-14),
    "trapping.temperature": Key("temperature", None, optional=True),
    "solver.scheme": Key("choice", "rb87_d1", ("rb87_d1", "lambda")),
    "solver.velocity_classes": Key("count", 101),
    "solver.velocity_span": Key("number", 4.0),
    "solver.grid_stretch": Key("number", 3.0),
    "solver.z_steps": Key("count", 20),
    "solver.field_step": Key("field", None, optional=True),
    "solver.laser_detuning": Key("rate", 0.0),
    "solver.gamma_eff": Key("rate", 0.004),
    "solver.pumping_rate": Key("rate", 0.0),
    "solver.hyperfine_splitting": Key("frequency", constants.RB87_D1_EXCITED_HFS_HZ),
    "solver.max_step_change": Key("number", 0.1),
    "scan.density_min": Key("density", 1e10),
    "scan.density_max": Key("density", 5e12),
    "scan.points": Key("count", 12),
    "scan.spacing": Key("choice", "log", ("log", "linear")),
    "scan.model": Key("choice", "analytic", ("analytic", "multilevel")),
    "scan.profile_samples": Key("count", 51),
    "fit.input": Key("path", ""),
    "fit.low_density_threshold": Key("number", 0.999),
    "fit.clamp_epsilon": Key("number", 0.05),
    "fit.simulation_route": Key("bool", False),
    "fit.weight_transmission": Key("number", 1.0),
    "fit.weight_slope": Key("number", 1.0),
    "analytic.validity_margin": Key("number", 1.0),
    "io.out_dir": Key("path", "out"),
}

_LINE = re.compile(r"^\s*([A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(\S*)(?:\s+(\S+))?\s*$")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration in canonical units.

    ``explicit`` names the keys set by the user; all others carry defaults.
    """

    mode: str
    values: Dict[str, Any] = field(compare=True)
    explicit: FrozenSet[str] = frozenset()

    def __getitem__(self, key: str):
        return self.values[key]

    def provenance(self, key: str) -> str:
        return "explicit" if key in self.explicit else "default"

    def digest(self) -> str:
        return hashlib.sha256(serialize_config(self, include_defaults=True).encode()).hexdigest()


def _parse_scalar(key: str, spec: Key, raw: str, unit: Optional[str], line: Optional[int]):
    if raw == "" and spec.kind != "path":
        raise ConfigError(f"{key} has no value", line)
    if spec.optional and raw == "auto":
        if unit is not None:
            raise ConfigError(f"{key}: 'auto' takes no unit", line)
        return None
    if spec.kind in ("choice", "path", "bool", "count", "number"):
        if unit is not None:
            raise ConfigError(f"{key} is dimensionless and takes no unit (got {unit!r})", line)
        if spec.kind == "choice":
            if raw not in spec.choices:
                raise ConfigError(f"{key} must be one of {', '.join(spec.choices)}; got {raw!r}", line)
            return raw
        if spec.kind == "path":
            return raw
        if spec.kind == "bool":
            if raw.lower() not in ("true", "false"):
                raise ConfigError(f"{key} must be true or false", line)
            return raw.lower() == "true"
        try:
            value = int(raw) if spec.kind == "count" else float(raw)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r} as a {spec.kind}", line) from None
        return value
    if unit is None:
        raise ConfigError(f"{key} is a {spec.kind} and needs an explicit unit", line)
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as a number", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line)
    if spec.kind == "rate":
        if unit not in RATE_UNITS:
            raise ConfigError(f"{key}: unit {unit!r} is not a rate unit ({', '.join(RATE_UNITS)})", line)
        # absolute rates are resolved once medium.gamma_r is known
        return (value, unit)
    table = UNITS[spec.kind]
    if unit not in table:
        raise ConfigError(f"{key}: unit {unit!r} is not a {spec.kind} unit ({', '.join(table)})", line)
    return value * table[unit]


def _rate_to_gamma_r(value: float, unit: str, gamma_r_hz: float) -> float:
    if unit == "gamma_r":
        return value
    if unit in _FREQ:
        return value * _FREQ[unit] / gamma_r_hz
    return value / (constants.TWO_PI * gamma_r_hz)


def _split_assignment(text: str, line: Optional[int]):
    m = _LINE.match(text)
    if not m:
        raise ConfigError(f"cannot parse {text.strip()!r}; expected 'section.key = value [unit]'", line)
    key, raw, unit = m.groups()
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}", line)
    return key, raw, unit


def parse_config(text: str, overrides: Iterable[str] = (), mode: Optional[str] = None) -> RunConfig:
    """Parse config text, then apply ``section.key=value unit`` overrides and a mode override."""
    raw_values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        key, raw, unit = _split_assignment(body, lineno)
        if key in raw_values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        raw_values[key] = _parse_scalar(key, SCHEMA[key], raw, unit, lineno)
    for item in overrides:
        key, raw, unit = _split_assignment(item.replace("=", " = ", 1), None)
        raw_values[key] = _parse_scalar(key, SCHEMA[key], raw, unit, None)
    if mode is not None:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        raw_values["run.mode"] = mode

    values = {k: spec.default for k, spec in SCHEMA.items()}
    values.update(raw_values)
    gamma_r_hz = values["medium.gamma_r"]
    if not gamma_r_hz > 0:
        raise ConfigError("medium.gamma_r must be positive")
    for key, spec in SCHEMA.items():
        if spec.kind == "rate" and isinstance(values[key], tuple):
            values[key] = _rate_to_gamma_r(*values[key], gamma_r_hz)
    if values["run.mode"] is None:
        raise ConfigError("run.mode is required (set it in the file or on the command line)")
    _validate(values)
    return RunConfig(mode=values.pop("run.mode"), values=values, explicit=frozenset(raw_values) - {"run.mode"})


def _validate(values):
    positive = [k for k, s in SCHEMA.items() if s.kind in ("length", "frequency", "larmor", "area")]
    positive += ["medium.doppler_width", "trapping.escape_rate", "trapping.density_scale", "trapping.exponent"]
    for k in positive:
        if not values[k] > 0:
            raise ConfigError(f"{k} must be positive")
    nonnegative = ["medium.density", "medium.gamma_0", "solver.gamma_eff", "solver.pumping_rate",
                   "trapping.n_threshold", "trapping.n_beam", "trapping.slope_low", "trapping.slope_high"]
    for k in nonnegative:
        if values[k] < 0:
            raise ConfigError(f"{k} must be nonnegative")
    if values["solver.z_steps"] < 2 or values["solver.velocity_classes"] < 1 or values["scan.points"] < 1:
        raise ConfigError("solver.z_steps >= 2, solver.velocity_classes >= 1 and scan.points >= 1 are required")
    if not 0 < values["scan.density_min"] <= values["scan.density_max"]:
        raise ConfigError("scan densities must satisfy 0 < density_min <= density_max")
    if values["trapping.temperature"] is not None and not values["trapping.temperature"] > 0:
        raise ConfigError("trapping.temperature must be positive")


def _format_value(key: str, value) -> str:
    spec = SCHEMA[key]
    if value is None:
        return "auto"
    if spec.kind in ("choice", "path"):
        return str(value)
    if spec.kind == "bool":
        return "true" if value else "false"
    if spec.kind == "count":
        return str(int(value))
    if spec.kind == "number":
        return repr(float(value))
    return f"{float(value)!r} {CANONICAL_UNIT[spec.kind]}"


def serialize_config(config: RunConfig, include_defaults: bool = False) -> str:
    """Canonical text form; reparsing it yields an equal :class:`RunConfig`."""
    lines = [f"run.mode = {config.mode}"]
    for key in SCHEMA:
        if key == "run.mode":
            continue
        if include_defaults or key in config.explicit:
            lines.append(f"{key} = {_format_value(key, config.values[key])}")
    return "\n".join(lines) + "\n"
