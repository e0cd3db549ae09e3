"""Run configuration: key-value config files merged with command-line flags."""

import os
from dataclasses import dataclass, fields

from .encoders import parse_modalities


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    graph: str = None
    split: str = None
    out: str = None
    checkpoint: str = None
    policy: str = "split"
    modalities: str = "all"
    epochs: int = 100
    lr: float = 0.01
    patience: int = 7
    hidden: int = 16
    bases: int = None
    seed: int = 0
    runs: int = 1
    jobs: int = 1
    encoder_passes: int = 4
    dtype: str = "float32"
    # generator knobs
    nodes: int = 4096
    neighbors: int = 4
    rewire: float = 0.1
    signal_entities: int = 256
    attribute_probability: float = 0.9
    separation: float = 1.0
    image_size: int = 64


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {int: int, float: float, str: str, "int": int, "float": float, "str": str}


def _cast(key, raw):
    if raw is None:
        return None
    kind = FIELD_TYPES[key]
    if isinstance(raw, str) and raw.strip().lower() in ("none", "") and key == "bases":
        return None
    try:
        return _CASTS[kind](raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {raw!r} as {getattr(kind, '__name__', kind)}") from None


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        try:
            values[key] = _cast(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{number}: {exc}") from None
    return values


def build_config(file_values, flag_values):
    """Defaults, then the config file, then explicit flags (flags win)."""
    merged = {}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if key not in FIELD_TYPES:
                raise ConfigError(f"unknown key {key!r}")
            if value is not None:
                merged[key] = _cast(key, value)
    return RunConfig(**merged)


def validate(config, command):
    """Raise :class:`ConfigError` before any computation starts."""
    need = {
        "inspect": ("graph",),
        "train": ("graph", "split", "out"),
        "eval": ("graph", "split", "checkpoint"),
        "ablate": ("graph", "split", "out"),
        "generate": ("out",),
    }[command]
    for key in need:
        if getattr(config, key) is None:
            raise ConfigError(f"{command}: --{key} is required")
    for key in ("graph", "split", "checkpoint"):
        path = getattr(config, key)
        if key in need and path is not None and not os.path.isfile(path):
            raise ConfigError(f"{key} file not found: {path}")
    policies = ("merged", "split", "both") if command in ("ablate", "inspect") else ("merged", "split")
    if config.policy not in policies:
        raise ConfigError(f"policy must be one of {policies}, got {config.policy!r}")
    try:
        parse_modalities(config.modalities)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    positive = ("epochs", "hidden", "runs", "jobs", "encoder_passes", "nodes", "image_size")
    for key in positive:
        if getattr(config, key) < 1:
            raise ConfigError(f"{key} must be at least 1")
    if config.patience < 1 or config.patience >= config.epochs:
        raise ConfigError("patience must satisfy 1 <= patience < epochs")
    if config.lr < 0:
        raise ConfigError("lr must be non-negative")
    if config.bases is not None and config.bases < 1:
        raise ConfigError("bases must be at least 1")
    if config.dtype not in ("float32", "float64"):
        raise ConfigError("dtype must be float32 or float64")
    if command == "generate":
        if config.signal_entities > config.nodes or config.signal_entities % 2:
            raise ConfigError("signal_entities must be even and at most nodes")
        if not 0.0 <= config.attribute_probability <= 1.0 or not 0.0 <= config.rewire <= 1.0:
            raise ConfigError("probabilities must lie in [0, 1]")
        if config.neighbors < 2 or config.neighbors % 2 or config.neighbors >= config.nodes:
            raise ConfigError("neighbors must be even, >= 2 and smaller than nodes")
        if config.separation <= 0:
            raise ConfigError("separation must be positive")
    return config
