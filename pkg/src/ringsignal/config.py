"""Experiment configuration: flat TOML key/value files with grid shorthand.

Grid-valued keys (``k0``, ``k0_kbar``, ``T``) take a number, a list of numbers
or a ``"start:stop:step"`` string (stop included). Units: V and W in m/s, K and
k0 in veh/m, k0_kbar in multiples of the critical density, L in m, T, delta,
dt and T_cap in s, tol in vehicles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError, DomainError
from .fundamentals import FundamentalDiagram, RingConfig, SignalPlan

MODES = ("simulate", "analytic", "closed-form")


@dataclass(frozen=True)
class Grid:
    values: tuple
    text: object  # what was written in the file, re-emitted verbatim

    @classmethod
    def parse(cls, raw, key: str) -> "Grid":
        if isinstance(raw, bool):
            raise ConfigurationError(f"{key}: expected number, list or 'start:stop:step'")
        if isinstance(raw, (int, float)):
            values = (float(raw),)
        elif isinstance(raw, list):
            values = tuple(float(v) for v in raw)
        elif isinstance(raw, str):
            values = _expand(raw, key)
        else:
            raise ConfigurationError(f"{key}: unsupported value {raw!r}")
        if not values:
            raise ConfigurationError(f"{key}: grid is empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigurationError(f"{key}: grid must be strictly increasing")
        return cls(values, raw)

    @classmethod
    def of(cls, *values) -> "Grid":
        vals = tuple(float(v) for v in values)
        return cls(vals, vals[0] if len(vals) == 1 else list(vals))


def _expand(text: str, key: str) -> tuple:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"{key}: grid shorthand must be 'start:stop:step', got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigurationError(f"{key}: {exc}") from None
    if not step > 0 or stop < start:
        raise ConfigurationError(f"{key}: need step > 0 and stop >= start in {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9))
    return tuple(start + i * step for i in range(n + 1))


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of an experiment; defaults give the standard numerical example."""

    V: float = 20.0
    W: float = 5.0
    K: float = 1 / 7
    L: float = 1200.0
    k0: Optional[Grid] = None
    k0_kbar: Optional[Grid] = field(default_factory=lambda: Grid.of(1 / 1.5))
    delta: float = 3.0
    pi0: float = 0.5
    T: Grid = field(default_factory=lambda: Grid.of(60.0))
    dt: float = 0.1
    max_cycles: int = 200
    m_max: int = 8
    tol: Optional[float] = None
    exact_pi: bool = False
    mode: str = "simulate"
    T_cap: float = 600.0
    gap: float = 0.035
    cross_check: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if (self.k0 is None) == (self.k0_kbar is None):
            raise ConfigurationError("give exactly one of k0 and k0_kbar")
        if not self.dt > 0 or self.max_cycles < 1 or self.m_max < 1:
            raise ConfigurationError("dt, max_cycles and m_max must be positive")
        try:
            fd = self.fd
            for k0 in self.densities:
                RingConfig(self.L, k0).validate(fd)
            for T in self.T.values:
                SignalPlan(T=T, pi0=self.pi0, delta=self.delta)
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def fd(self) -> FundamentalDiagram:
        return FundamentalDiagram(self.V, self.W, self.K)

    @property
    def densities(self) -> tuple:
        if self.k0 is not None:
            return self.k0.values
        return tuple(min(f * self.fd.Kbar, self.K) for f in self.k0_kbar.values)

    def ring(self, k0: float) -> RingConfig:
        return RingConfig(self.L, k0)

    def plan(self, T: float) -> SignalPlan:
        return SignalPlan(T=T, pi0=self.pi0, delta=self.delta)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, raw in data.items():
            if key in ("k0", "k0_kbar", "T"):
                kwargs[key] = Grid.parse(raw, key)
            elif key in ("exact_pi", "cross_check"):
                if not isinstance(raw, bool):
                    raise ConfigurationError(f"{key} must be true or false")
                kwargs[key] = raw
            elif key == "mode":
                kwargs[key] = str(raw)
            elif key in ("max_cycles", "m_max"):
                if isinstance(raw, bool) or not isinstance(raw, int):
                    raise ConfigurationError(f"{key} must be an integer")
                kwargs[key] = raw
            else:
                if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                    raise ConfigurationError(f"{key} must be a number")
                kwargs[key] = float(raw)
        if "k0" in kwargs and "k0_kbar" not in kwargs:
            kwargs["k0_kbar"] = None
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(Path(path), "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_mapping(data)

    def to_toml(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, Grid):
                value = value.text
            lines.append(f"{f.name} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigurationError(f"cannot serialize {value!r}")
