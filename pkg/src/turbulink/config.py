"""Run configuration: file format, validation, and serialization.

The config file is a small key-value format with nested tables, a strict
subset of the common bracketed-section style:

    # comment
    [link]
    distance_m = 30000.0
    wavelength_m = 3.95e-6

    [sweep]
    axes = ["waist_m"]
    waist_m = [0.10, 0.1457, 0.20]

Values are floats, integers, booleans (true/false), double-quoted strings,
or flat arrays of those.  Every parse error reports line and column; every
physical value is range-checked against the keys listed in RANGES.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

SPEED_OF_LIGHT = 299792458.0


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse_scalar(token: str, lineno: int, col: int):
    token = token.strip()
    if not token:
        raise ConfigError(f"line {lineno}, column {col}: empty value")
    if token == "true":
        return True
    if token == "false":
        return False
    if token.startswith('"'):
        if not (len(token) >= 2 and token.endswith('"')):
            raise ConfigError(f"line {lineno}, column {col}: unterminated string")
        return token[1:-1]
    try:
        if any(c in token for c in ".eE") and not token.lstrip("+-").isdigit():
            return float(token)
        return int(token)
    except ValueError:
        try:
            return float(token)
        except ValueError:
            raise ConfigError(
                f"line {lineno}, column {col}: cannot parse value {token!r}"
            ) from None


def parse_table_text(text: str) -> dict:
    """Parse the documented key-value/nested-table grammar into nested dicts."""
    tables: dict = {}
    current: dict | None = None
    current_name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"line {lineno}, column {col}: unterminated table header")
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}, column {col}: empty table name")
            if name in tables:
                raise ConfigError(f"line {lineno}, column {col}: duplicate table [{name}]")
            current = {}
            current_name = name
            tables[name] = current
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}, column {col}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"line {lineno}, column {col}: key outside any [table]")
        key, _, value_text = stripped.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        value_col = col + len(stripped) - len(value_text)
        if not key:
            raise ConfigError(f"line {lineno}, column {col}: empty key")
        if key in current:
            raise ConfigError(
                f"line {lineno}, column {col}: duplicate key {key!r} in [{current_name}]"
            )
        if value_text.startswith("["):
            if not value_text.endswith("]"):
                raise ConfigError(f"line {lineno}, column {value_col}: unterminated array")
            inner = value_text[1:-1].strip()
            items = []
            if inner:
                for piece in inner.split(","):
                    items.append(_parse_scalar(piece, lineno, value_col))
            current[key] = items
        else:
            current[key] = _parse_scalar(value_text, lineno, value_col)
    return tables


# key -> (lower, upper, unit label); checked when present
RANGES = {
    "wavelength_m": (0.3e-6, 15e-6, "m"),
    "distance_m": (1.0, 5.0e5, "m"),
    "cn2": (0.0, 1e-11, "m^-2/3"),
    "waist_m": (1e-3, 10.0, "m"),
    "transmitter_height_m": (0.1, 1e4, "m"),
    "receiver_height_m": (0.1, 1e4, "m"),
    "sigma_a_trad": (1e-3, 1e4, "T rad/s"),
    "sigma_b_trad": (1e-3, 1e4, "T rad/s"),
    "pump_trad": (1.0, 1e5, "T rad/s"),
    "extinction_per_km": (0.0, 100.0, "1/km"),
    "outer_scale_wavenumber": (1e-6, 1e3, "1/m"),
    "cutoff": (0, 8, ""),
    "grid_order": (4, 64, ""),
    "steps": (16, 100000, ""),
    "max_mode": (0, 14, ""),
    "pair_modes": (2, 14, ""),
    "fixed_mode": (0, 10, ""),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for every subcommand.

    Frequencies in the file are T rad/s (1e12 rad/s); lengths are meters.
    The random seed is reserved for future stochastic extensions; the core
    is deterministic and ignores it.
    """

    distance_m: float = 30000.0
    wavelength_m: float = 3.95e-6
    waist_m: float = 0.1457
    transmitter_height_m: float = 19.0
    receiver_height_m: float = 19.0
    cn2: float = 1e-15
    profile_csv: str = ""
    outer_scale_wavenumber: float = 1.0
    extinction_per_km: float = 0.0
    sigma_a_trad: float = 10.0
    sigma_b_trad: float = 80.0
    pump_trad: float = 0.0  # 0 -> derived from the wavelength (2 * 2 pi c / lambda)
    cutoff: int = 4
    scheme: str = "truncated_exact"
    steps: int = 256
    check_convergence: bool = False
    grid_order: int = 32
    kernel_fidelity: str = "analytic"
    max_mode: int = 3
    pair_modes: int = 12
    fixed_mode: int = 0
    output_dir: str = "."
    seed: int = 0
    sweep_axes: tuple = ()
    sweep_values: tuple = ()

    @property
    def pump_rad(self) -> float:
        if self.pump_trad > 0:
            return self.pump_trad * 1e12
        return 2.0 * (2.0 * math.pi * SPEED_OF_LIGHT / self.wavelength_m)

    @property
    def sigma_a_rad(self) -> float:
        return self.sigma_a_trad * 1e12

    @property
    def sigma_b_rad(self) -> float:
        return self.sigma_b_trad * 1e12


_SECTION_KEYS = {
    "link": (
        "distance_m",
        "wavelength_m",
        "waist_m",
        "transmitter_height_m",
        "receiver_height_m",
    ),
    "turbulence": ("cn2", "profile_csv", "outer_scale_wavenumber", "extinction_per_km"),
    "source": ("sigma_a_trad", "sigma_b_trad", "pump_trad"),
    "solver": ("cutoff", "scheme", "steps", "check_convergence"),
    "channel": ("grid_order", "kernel_fidelity", "max_mode"),
    "entangle": ("pair_modes", "fixed_mode"),
    "output": ("output_dir",),
    "run": ("seed",),
}

_KEY_SECTION = {key: section for section, keys in _SECTION_KEYS.items() for key in keys}

_INT_KEYS = {"cutoff", "steps", "grid_order", "max_mode", "pair_modes", "fixed_mode", "seed"}


def _check_range(key: str, value):
    bounds = RANGES.get(key)
    if bounds is None:
        return
    lower, upper, unit = bounds
    if not (lower <= value <= upper):
        suffix = f" {unit}" if unit else ""
        raise ConfigError(
            f"value for '{key}' out of range: {value} not in [{lower}, {upper}]{suffix}"
        )


def config_from_tables(tables: dict) -> RunConfig:
    """Validate nested tables and build a RunConfig."""
    values = {}
    for section, body in tables.items():
        if section == "sweep":
            continue
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown table [{section}]")
        for key, value in body.items():
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            if key in _INT_KEYS:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"key '{key}' must be an integer, got {value!r}")
            values[key] = value

    sweep = tables.get("sweep", {})
    axes = tuple(sweep.get("axes", ()))
    sweep_values = []
    for axis in axes:
        if axis not in _KEY_SECTION:
            raise ConfigError(f"sweep axis '{axis}' is not a configurable key")
        if axis not in sweep:
            raise ConfigError(f"sweep axis '{axis}' has no value list in [sweep]")
        points = sweep[axis]
        if not isinstance(points, list) or not points:
            raise ConfigError(f"sweep axis '{axis}' needs a non-empty array of values")
        sweep_values.append(tuple(points))
    total = 1
    for points in sweep_values:
        total *= len(points)
    if total > 100000:
        raise ConfigError(f"sweep would evaluate {total} points (limit 100000)")

    config = RunConfig(**values, sweep_axes=axes, sweep_values=tuple(sweep_values))
    validate_config(config)
    return config


def validate_config(config: RunConfig):
    for key in RANGES:
        if hasattr(config, key):
            if key == "pump_trad" and config.pump_trad == 0.0:
                continue  # 0 means "derive from the carrier wavelength"
            _check_range(key, getattr(config, key))
    if config.profile_csv and not os.path.exists(config.profile_csv):
        raise ConfigError(f"value for 'profile_csv' invalid: no such file {config.profile_csv!r}")
    if config.scheme not in ("truncated_exact", "lindblad_truncated"):
        raise ConfigError(f"unknown solver scheme '{config.scheme}'")
    if config.kernel_fidelity not in ("analytic", "full_ipe"):
        raise ConfigError(f"unknown kernel fidelity '{config.kernel_fidelity}'")
    if config.kernel_fidelity == "full_ipe" and config.grid_order > 12:
        raise ConfigError("value for 'grid_order' out of range: full_ipe kernels allow at most 12")
    if config.cn2 != 0.0 and not (1e-19 <= config.cn2 <= 1e-11):
        raise ConfigError(f"value for 'cn2' out of range: {config.cn2}")
    if config.max_mode + 1 > config.grid_order // 2:
        raise ConfigError(
            f"value for 'max_mode' out of range: {config.max_mode} needs grid_order >= {2 * (config.max_mode + 1)}"
        )


def parse_config(path: str) -> RunConfig:
    """Read and validate a config file."""
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return config_from_tables(parse_table_text(text))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def serialize_config(config: RunConfig) -> str:
    """Render a RunConfig in the file grammar; parse(serialize(c)) == c."""
    lines = []
    for section, keys in _SECTION_KEYS.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_format_value(getattr(config, key))}")
        lines.append("")
    if config.sweep_axes:
        lines.append("[sweep]")
        lines.append(f"axes = {_format_value(list(config.sweep_axes))}")
        for axis, points in zip(config.sweep_axes, config.sweep_values):
            lines.append(f"{axis} = {_format_value(list(points))}")
        lines.append("")
    return "\n".join(lines)


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply `key=value` command-line overrides (same keys as the file)."""
    if not overrides:
        return config
    parsed = {}
    for key, text in overrides.items():
        if key not in _KEY_SECTION:
            raise ConfigError(f"unknown override key '{key}'")
        current = getattr(RunConfig(), key)
        try:
            if key in _INT_KEYS:
                parsed[key] = int(text)
            elif isinstance(current, bool):
                parsed[key] = text.lower() in ("1", "true", "yes")
            elif isinstance(current, float):
                parsed[key] = float(text)
            else:
                parsed[key] = text
        except ValueError as exc:
            raise ConfigError(f"override '{key}={text}': {exc}") from exc
    updated = replace(config, **parsed)
    validate_config(updated)
    return updated
