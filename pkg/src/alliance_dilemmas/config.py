"""Flat ``section.key = value`` configuration files and run snapshots."""

from __future__ import annotations

import ast
from dataclasses import dataclass, fields
from pathlib import Path

from .dynamics import DynamicsConfig
from .training import TrainConfig


@dataclass(frozen=True)
class GameSettings:
    n_games: int = 1000
    grid_step: float = 0.1
    n_bins: int = 20


@dataclass(frozen=True)
class DynamicsSettings:
    n_runs: int = 100
    record_every: int = 10
    game: str = "odd-one-out"


SECTIONS = {
    "matrix_games": GameSettings,
    "dynamics": DynamicsConfig,
    "dynamics_run": DynamicsSettings,
    "training": TrainConfig,
}
TOP_LEVEL = {"seed", "out", "init", "checkpoint", "episodes"}


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment; keys are validated."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        check_key(key)
        out[key] = parse_value(value)
    return out


def check_key(key: str) -> None:
    if key in TOP_LEVEL:
        return
    section, _, name = key.partition(".")
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section in {key!r}; known: {sorted(SECTIONS)}")
    if name not in {f.name for f in fields(SECTIONS[section])}:
        raise ConfigError(f"unknown config key {key!r}")


def load_config(path) -> dict[str, object]:
    return parse_config_text(Path(path).read_text())


def section(values: dict[str, object], name: str) -> dict[str, object]:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}


def build(cls, values: dict[str, object], name: str, **defaults):
    kw = dict(defaults)
    kw.update(section(values, name))
    for f in fields(cls):
        if f.name in kw and isinstance(kw[f.name], list):
            kw[f.name] = tuple(kw[f.name])
    return cls(**kw)


def format_config(flat: dict[str, object]) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in sorted(flat.items()))


def write_snapshot(directory, flat: dict[str, object]) -> Path:
    path = Path(directory) / "config.txt"
    path.write_text(format_config(flat))
    return path
