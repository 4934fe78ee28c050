"""Tool configuration: dataclass sections, JSON config files and environment overrides.

Precedence is command line > environment > config file > defaults. The
command-line layer is applied by :mod:`foascene.cli`.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from foascene.features import FeatureConfig
from foascene.localizer import LocalizerConfig
from foascene.similarity import EmbeddingConfig
from foascene.synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityConfig:
    kind: str = "lexical"
    fallback_to_lexical: bool = True
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)


@dataclass
class ToolConfig:
    seed: int = 0
    workers: Optional[int] = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    localizer: LocalizerConfig = field(default_factory=LocalizerConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# environment variable -> (section path, field, type)
ENV_OVERRIDES = {
    "FOASCENE_SEED": ((), "seed", int),
    "FOASCENE_WORKERS": ((), "workers", int),
    "FOASCENE_SAMPLE_RATE": (("synth",), "sample_rate", int),
    "FOASCENE_MAX_SOURCES": (("synth",), "max_sources", int),
    "FOASCENE_SIMILARITY": (("similarity",), "kind", str),
    "FOASCENE_EMBED_URL": (("similarity", "embedding"), "endpoint", str),
    "FOASCENE_EMBED_TIMEOUT": (("similarity", "embedding"), "timeout_s", float),
    "FOASCENE_EMBED_BATCH": (("similarity", "embedding"), "batch_size", int),
    "FOASCENE_EMBED_RETRIES": (("similarity", "embedding"), "max_retries", int),
}


def _coerce(value, template):
    if isinstance(template, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, current)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ToolConfig:
    return _build(ToolConfig, data, "config")


def load_config(path: Optional[str] = None, environ=None) -> ToolConfig:
    """Defaults, then the JSON file at ``path`` (if any), then environment overrides."""
    data = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    config = config_from_dict(data)
    return apply_env(config, environ)


def _replace_path(obj, path: tuple, name: str, value):
    if not path:
        return dataclasses.replace(obj, **{name: value})
    child = getattr(obj, path[0])
    return dataclasses.replace(obj, **{path[0]: _replace_path(child, path[1:], name, value)})


def apply_env(config: ToolConfig, environ=None) -> ToolConfig:
    env = os.environ if environ is None else environ
    for var, (path, name, kind) in ENV_OVERRIDES.items():
        raw = env.get(var)
        if raw in (None, ""):
            continue
        try:
            value = kind(raw)
        except ValueError as exc:
            raise ConfigError(f"environment variable {var}={raw!r} is not a valid {kind.__name__}") from exc
        try:
            config = _replace_path(config, path, name, value)
        except ValueError as exc:
            raise ConfigError(f"environment variable {var}: {exc}") from exc
    return config


def override(config: ToolConfig, section: Optional[str], **values) -> ToolConfig:
    """Apply non-None ``values`` to ``section`` (or the top level)."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return config
    try:
        if section is None:
            return dataclasses.replace(config, **values)
        return dataclasses.replace(config, **{section: dataclasses.replace(getattr(config, section), **values)})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
