"""Run configuration: flat ``key = value`` files, presets and overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .constants import HBAR, KB, RB87_MASS
from .errors import ConfigError
from .rates import RATE_MODES, WINDOW_KINDS, EnergyWindow
from .trap import TrapConfig, critical_temperature

# keys that do not change any physics output
NON_PHYSICS_KEYS = {"output_dir", "cache", "cache_dir", "threads", "export_canonical_table"}


@dataclass(frozen=True)
class RunConfig:
    n_atoms: int = 200
    mass: float = RB87_MASS  # kg
    scattering_length: float = 5.4e-9  # m
    trap_frequency_x_hz: float = 42.0  # omega = 2 pi f
    trap_frequency_y_hz: float = 42.0
    trap_frequency_z_hz: float = 120.0
    temperature_mode: str = "ratio"  # ratio (T/Tc) | absolute (K)
    temperature: float = 0.4
    gamma_mode: str = "beta_hbar"  # beta_hbar (dimensionless) | rad_s
    gamma: float = 0.1
    window_kind: str = "lorentzian"
    prune_factor: float = 0.0  # 0: per-window default
    energy_cutoff_factor: float = 12.0  # x k_B T above eps_0
    energy_cutoff_hz: float = 0.0  # > 0 overrides the factor: cutoff = h * value
    max_modes: int = 500_000
    rate_mode: str = "physical"
    close_boundary: bool = True
    initial_condition: str = "delta:0"  # delta:<N0> | gibbs_ratio:<T/Tc> | gibbs:<K>
    time_grid: str = "log:1e-4:10:200"  # log:<t0>:<t1>:<n> | lin:<t0>:<t1>:<n>
    propagation_method: str = "expm"
    tolerance: float = 1e-8
    steady_relaxation_times: float = 50.0
    output_dir: str = "out"
    cache: bool = True
    cache_dir: str = ".bec_cache"
    threads: int = 1
    export_canonical_table: bool = False
    seed: int = 0  # reserved; the core is deterministic

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ConfigError("n_atoms must be >= 1")
        for name in ("mass", "trap_frequency_x_hz", "trap_frequency_y_hz", "trap_frequency_z_hz",
                     "temperature", "gamma", "energy_cutoff_factor", "tolerance",
                     "steady_relaxation_times"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if not (math.isfinite(self.scattering_length) and self.scattering_length >= 0):
            raise ConfigError("scattering_length must be >= 0")
        if self.temperature_mode not in ("ratio", "absolute"):
            raise ConfigError(f"temperature_mode must be ratio|absolute, got {self.temperature_mode!r}")
        if self.gamma_mode not in ("beta_hbar", "rad_s"):
            raise ConfigError(f"gamma_mode must be beta_hbar|rad_s, got {self.gamma_mode!r}")
        if self.window_kind not in WINDOW_KINDS:
            raise ConfigError(f"window_kind must be one of {WINDOW_KINDS}")
        if self.rate_mode not in RATE_MODES:
            raise ConfigError(f"rate_mode must be one of {RATE_MODES}")
        if self.propagation_method not in ("expm", "radau"):
            raise ConfigError("propagation_method must be expm|radau")
        if self.prune_factor < 0 or self.energy_cutoff_hz < 0:
            raise ConfigError("prune_factor and energy_cutoff_hz must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        parse_time_grid(self.time_grid)
        parse_initial_condition(self.initial_condition, self.n_atoms)

    # derived quantities

    def trap(self) -> TrapConfig:
        return TrapConfig(
            2 * math.pi * self.trap_frequency_x_hz,
            2 * math.pi * self.trap_frequency_y_hz,
            2 * math.pi * self.trap_frequency_z_hz,
            self.mass,
            self.scattering_length,
        )

    def critical_temperature(self) -> float:
        return critical_temperature(self.trap(), self.n_atoms)

    def temperature_k(self) -> float:
        if self.temperature_mode == "absolute":
            return self.temperature
        return self.temperature * self.critical_temperature()

    def energy_cutoff(self) -> float:
        if self.energy_cutoff_hz > 0:
            return HBAR * 2 * math.pi * self.energy_cutoff_hz
        return self.energy_cutoff_factor * KB * self.temperature_k()

    def window(self) -> EnergyWindow:
        if self.gamma_mode == "rad_s":
            g = self.gamma
        else:
            g = self.gamma * KB * self.temperature_k() / HBAR
        return EnergyWindow(self.window_kind, g)

    def prune(self) -> float | None:
        return self.prune_factor if self.prune_factor > 0 else None

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # serialization

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_dict().items())

    def physics_hash(self) -> str:
        text = "".join(
            f"{k} = {_format(v)}\n" for k, v in self.to_dict().items() if k not in NON_PHYSICS_KEYS
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _field_types() -> dict:
    return {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(RunConfig)}


def parse_assignments(lines, base: dict | None = None) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict."""
    types = _field_types()
    out = dict(base or {})
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value, types[key])
    return out


PRESETS: dict[str, dict] = {
    "paper-n200": {},
    # quasi-1D trap whose three lowest modes (kx = 1, 2, 3) have nonzero overlaps
    "toy-3mode": {
        "n_atoms": 4,
        "trap_frequency_x_hz": 20.0,
        "trap_frequency_y_hz": 200.0,
        "trap_frequency_z_hz": 200.0,
        "temperature_mode": "absolute",
        "temperature": 2e-9,
        "energy_cutoff_hz": 65.0,
        "gamma_mode": "rad_s",
        "gamma": 2 * math.pi * 200.0,
        "window_kind": "box",
        "time_grid": "log:1e-2:1e4:80",
    },
}


def load_config(source: str, overrides=()) -> RunConfig:
    """Preset name or path to a key-value file, then ``key=value`` overrides."""
    if source in PRESETS:
        values = dict(PRESETS[source])
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"{source!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
        values = parse_assignments(path.read_text(encoding="utf-8").splitlines())
    values = parse_assignments(list(overrides), values)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_time_grid(spec: str):
    import numpy as np

    try:
        kind, a, b, n = spec.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ConfigError(f"time_grid must look like log:<t0>:<t1>:<n>, got {spec!r}") from None
    if n < 1 or not 0 <= a < b or (kind == "log" and a <= 0):
        raise ConfigError(f"invalid time grid {spec!r}")
    if kind == "log":
        return np.geomspace(a, b, n)
    if kind == "lin":
        return np.linspace(a, b, n)
    raise ConfigError(f"time grid kind must be log|lin, got {kind!r}")


def parse_initial_condition(spec: str, n_atoms: int) -> tuple[str, float]:
    try:
        kind, value = spec.split(":")
        value = float(value)
    except ValueError:
        raise ConfigError(f"initial_condition must look like delta:<N0>, got {spec!r}") from None
    if kind == "delta":
        if value != int(value) or not 0 <= value <= n_atoms:
            raise ConfigError(f"delta initial condition needs integer N0 in 0..{n_atoms}")
    elif kind in ("gibbs", "gibbs_ratio"):
        if not value > 0:
            raise ConfigError("initial temperature must be positive")
    else:
        raise ConfigError(f"unknown initial condition {kind!r}")
    return kind, value
