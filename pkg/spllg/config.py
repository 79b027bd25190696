"""
Simulation configuration: schema-driven parsing, validation and serialization.

The accepted keys, their types, defaults and bounds live in
``config_schema.json`` next to this file, in the same descriptor format the
experiment modules use for their inputs.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .basis import DomainGeometry
from .errors import ConfigError, InvalidArgument
from .events import log

SCHEMA_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config_schema.json")

STEP_TOL = 1e-9
UNIT_TOL = 1e-6


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Any]:
    with open(SCHEMA_FILE, "r", encoding="utf-8") as f:
        return json.load(f)


def schema_inputs() -> Dict[str, Dict[str, Any]]:
    return {item["name"]: item for item in load_schema()["inputs"]}


@dataclass(frozen=True)
class SimulationConfig:
    alpha: float
    k: float
    T: float
    dt: float
    n_modes_schrodinger: int
    n_modes_magnet: int
    n_modes_potential: int
    wavefunctions: int
    occupations: Optional[Tuple[float, ...]]
    schrodinger_length: float
    magnet_start: float
    magnet_end: float
    grid_points: int
    psi_spin_angle: float
    m0_tilt: float
    stray_field: bool
    anisotropy: bool
    coupling: bool
    noise: bool
    gilbert_form: str
    noise_family: str
    wiener_dim: int
    noise_amplitudes: Tuple[float, ...]
    noise_shape: str
    noise_vectors: Optional[Tuple[Tuple[float, ...], ...]]
    jump_intensity: float
    jump_mark_radius: float
    jump_amplitude: float
    jump_direction: Optional[Tuple[float, ...]]
    jump_mark_directions: Optional[Tuple[Tuple[float, ...], ...]]
    jump_profile: str
    ensemble_size: int
    seed: int
    workers: int
    save_every: int
    stiffness_factor: float
    moment_order: int

    @property
    def geometry(self) -> DomainGeometry:
        return DomainGeometry(self.schrodinger_length, self.magnet_start, self.magnet_end, self.grid_points)

    @property
    def step_count(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def save_count(self) -> int:
        return self.step_count // self.save_every + 1

    @property
    def occupation_weights(self) -> np.ndarray:
        if self.occupations is None:
            return np.full(self.wavefunctions, 1.0 / self.wavefunctions)
        return np.asarray(self.occupations, dtype=float)

    @property
    def stiff(self) -> bool:
        return self.k > 0 and self.dt > self.stiffness_factor / self.k

    def replace(self, **changes: Any) -> "SimulationConfig":
        """Copy with ``changes`` applied, re-validated through the schema."""
        values = self.to_dict()
        values.update(changes)
        return config_from_mapping(values)

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# Field coercion
# ---------------------------------------------------------------------------

def _number(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    return value


def _integer(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if isinstance(value, float) and (not math.isfinite(value) or value != int(value)):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(value)


def _check_bounds(key: str, value: float, entry: Dict[str, Any]) -> None:
    low, high = entry.get("min"), entry.get("max")
    if low is not None:
        if entry.get("exclusive_min") and not value > low:
            raise ConfigError(key, f"must be > {low}, got {value}")
        if not entry.get("exclusive_min") and value < low:
            raise ConfigError(key, f"must be >= {low}, got {value}")
    if high is not None:
        if entry.get("exclusive_max") and not value < high:
            raise ConfigError(key, f"must be < {high}, got {value}")
        if not entry.get("exclusive_max") and value > high:
            raise ConfigError(key, f"must be <= {high}, got {value}")


def _coerce(key: str, value: Any, entry: Dict[str, Any]) -> Any:
    kind = entry["type"]
    if value is None:
        if entry.get("default", 0) is None:
            return None
        raise ConfigError(key, "may not be null")
    if kind == "number":
        result = _number(key, value)
        _check_bounds(key, result, entry)
        return result
    if kind == "integer":
        result = _integer(key, value)
        _check_bounds(key, result, entry)
        return result
    if kind == "checkbox":
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true or false, got {value!r}")
        return value
    if kind == "select":
        if value not in entry["options"]:
            raise ConfigError(key, f"must be one of {entry['options']}, got {value!r}")
        return value
    if kind == "number_list":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(key, "expected a non-empty list of numbers")
        items = tuple(_number(key, v) for v in value)
        for item in items:
            _check_bounds(key, item, entry)
        return items
    if kind == "vector_list":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(key, "expected a non-empty list of vectors")
        rows = []
        for row in value:
            if not isinstance(row, (list, tuple)) or not row:
                raise ConfigError(key, f"expected a vector, got {row!r}")
            rows.append(tuple(_number(key, v) for v in row))
        return tuple(rows)
    raise ConfigError(key, f"schema type {kind!r} is not supported")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def config_from_mapping(data: Dict[str, Any], strict: bool = False) -> SimulationConfig:
    if not isinstance(data, dict):
        raise ConfigError("<config>", "expected a JSON object")
    if "manifest_version" in data and isinstance(data.get("config"), dict):
        data = data["config"]
    inputs = schema_inputs()
    unknown = sorted(set(data) - set(inputs))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    values: Dict[str, Any] = {}
    for name, entry in inputs.items():
        if name not in data:
            if entry.get("required"):
                raise ConfigError(name, "missing required key")
            raw = entry.get("default")
        else:
            raw = data[name]
        values[name] = _coerce(name, raw, entry)
    config = SimulationConfig(**values)
    check_constraints(config, strict=strict)
    return config


def parse_config(text: str, strict: bool = False) -> SimulationConfig:
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"not valid JSON: {exc}") from exc
    return config_from_mapping(data, strict=strict)


def load_config(path: Optional[str], strict: bool = False) -> SimulationConfig:
    if not path:
        return parse_config("{}", strict=strict)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError("<config>", f"cannot read {path}: {exc}") from exc
    return parse_config(text, strict=strict)


def serialize_config(config: SimulationConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def config_warnings(config: SimulationConfig) -> List[str]:
    warnings = []
    if config.stiff:
        warnings.append(
            f"dt={config.dt:g} exceeds stiffness_factor/k = {config.stiffness_factor / config.k:g}; "
            "explicit penalty stepping may be unstable"
        )
    return warnings


def check_constraints(config: SimulationConfig, strict: bool = False) -> None:
    L, a, b = config.schrodinger_length, config.magnet_start, config.magnet_end
    if not 0.0 < a:
        raise ConfigError("magnet_start", f"must be > 0, got {a}")
    if not a < b:
        raise ConfigError("magnet_end", f"must exceed magnet_start={a}, got {b}")
    if not b < L:
        raise ConfigError("magnet_end", f"must be < schrodinger_length={L}, got {b}")
    try:
        geometry = config.geometry
    except InvalidArgument as exc:
        raise ConfigError("grid_points", str(exc)) from exc
    problem = geometry.check_modes(config.n_modes_schrodinger, config.n_modes_magnet, config.n_modes_potential)
    if problem:
        raise ConfigError("grid_points", problem)
    if geometry.magnet_points < 2 * config.n_modes_magnet + 1:
        raise ConfigError(
            "n_modes_magnet",
            f"magnet grid has {geometry.magnet_points} points, needs at least {2 * config.n_modes_magnet + 1}",
        )
    if config.wavefunctions > config.n_modes_schrodinger:
        raise ConfigError("wavefunctions", "cannot exceed n_modes_schrodinger")
    if config.occupations is not None and len(config.occupations) != config.wavefunctions:
        raise ConfigError("occupations", f"expected {config.wavefunctions} weights, got {len(config.occupations)}")
    n = config.wiener_dim
    if len(config.noise_amplitudes) != n:
        raise ConfigError("noise_amplitudes", f"expected {n} amplitudes, got {len(config.noise_amplitudes)}")
    if config.noise_vectors is not None:
        if len(config.noise_vectors) != n or any(len(v) != 3 for v in config.noise_vectors):
            raise ConfigError("noise_vectors", f"expected {n} vectors of length 3")
    if config.jump_direction is not None:
        if len(config.jump_direction) != n:
            raise ConfigError("jump_direction", f"expected {n} components")
        if abs(math.sqrt(sum(v * v for v in config.jump_direction)) - 1.0) > UNIT_TOL:
            raise ConfigError("jump_direction", "must be a unit vector")
    if config.jump_mark_directions is not None:
        for row in config.jump_mark_directions:
            if len(row) != n or not any(row):
                raise ConfigError("jump_mark_directions", f"expected nonzero vectors with {n} components")
    steps = config.T / config.dt
    if abs(steps - round(steps)) > STEP_TOL * max(1.0, steps):
        raise ConfigError("dt", f"dt={config.dt:g} does not divide T={config.T:g}")
    if config.step_count % config.save_every:
        raise ConfigError("save_every", f"must divide the step count {config.step_count}")
    for message in config_warnings(config):
        if strict:
            raise ConfigError("dt", message)
        log("CONFIG", f"warning: {message}")


def default_config(**changes: Any) -> SimulationConfig:
    config = parse_config("{}")
    return config.replace(**changes) if changes else config
