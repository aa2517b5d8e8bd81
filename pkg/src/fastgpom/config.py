"""Strict INI run configuration: [scanner], [mapper], [simulation], [output]."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .mapping import MapperConfig
from .simulator import ScannerSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    kind: str = "simple_rooms"
    width: int = 200
    height: int = 200
    resolution: float = 0.05
    seed: int = 0
    step: float = 0.2
    waypoints: str = ""  # "x,y; x,y; ..." in meters
    pose_file: str = ""


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"


@dataclass(frozen=True)
class RunConfig:
    scanner: ScannerSpec = field(default_factory=ScannerSpec)
    mapper: MapperConfig = field(default_factory=MapperConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_SECTIONS = {"scanner": ScannerSpec, "mapper": MapperConfig,
             "simulation": SimulationConfig, "output": OutputConfig}


def _coerce(cls, name: str, raw: str):
    default = next(f.default for f in fields(cls) if f.name == name)
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {raw!r}")
            return lowered in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{cls.__name__}.{name}: {exc}") from None
    return raw.strip()


def override(obj, **values):
    """``dataclasses.replace`` that ignores ``None`` values and wraps validation errors."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return obj
    try:
        return replace(obj, **values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls = _SECTIONS[section]
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _coerce(cls, key, raw)
        sections[section] = override(cls(), **values)
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
