"""Run configuration: defaults, config-file loading, flag overrides, RNG streams.

Configuration merges three layers with increasing precedence: built-in
defaults, a TOML (or JSON) config file, and command-line flags. Every command
records its fully resolved configuration and master seed next to its
artifacts so a run can be reproduced exactly. All randomness fans out from
the one master seed into named streams, so individual components can be
re-run in isolation with identical draws.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embed import EmbedConfig
from .losses import LossConfig
from .model import ModelConfig
from .synthetic import SyntheticSpec
from .train import TrainConfig

__all__ = ["RunConfig", "ConfigError", "load_config_file", "seed_stream", "resolve_config"]


class ConfigError(ValueError):
    """Invalid or missing configuration; the message names the offender."""


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    data_path: str | None = None
    vocab_path: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    split_train_frac: float = 0.8
    split_val_frac: float = 0.1

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["embed"].pop("history", None)
        return out

    def write_snapshot(self, out_dir) -> None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / "resolved_config.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "loss": LossConfig,
    "embed": EmbedConfig,
    "synthetic": SyntheticSpec,
}


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text()
    if p.suffix == ".json":
        return json.loads(text)
    try:
        import tomllib  # Python 3.11+
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {e}") from e


def _apply_section(obj, section: dict, section_name: str):
    valid = {f.name for f in dataclasses.fields(obj)}
    for key, value in section.items():
        if key not in valid:
            raise ConfigError(f"unknown key {section_name}.{key}")
        setattr(obj, key, value)


def resolve_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    """defaults < config file < overrides; unknown keys are errors."""
    cfg = RunConfig()
    scalar_keys = {f.name for f in dataclasses.fields(RunConfig)} - set(_SECTIONS)
    if file_path is not None:
        data = load_config_file(file_path)
        for name, section in data.items():
            if name in _SECTIONS:
                if not isinstance(section, dict):
                    raise ConfigError(f"section {name} must be a table of keys")
                _apply_section(getattr(cfg, name), section, name)
            elif name in scalar_keys:
                setattr(cfg, name, section)
            else:
                raise ConfigError(f"unknown key {name}")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in dotted:
            section, key = dotted.split(".", 1)
            if section not in _SECTIONS:
                raise ConfigError(f"unknown key {dotted}")
            _apply_section(getattr(cfg, section), {key: value}, section)
        else:
            if dotted not in scalar_keys:
                raise ConfigError(f"unknown key {dotted}")
            setattr(cfg, dotted, value)
    # Revalidate dataclasses whose invariants live in __post_init__/validate.
    try:
        cfg.loss = LossConfig(**{f.name: getattr(cfg.loss, f.name)
                                 for f in dataclasses.fields(LossConfig)})
        sdict = dataclasses.asdict(cfg.synthetic)
        cfg.synthetic = SyntheticSpec(**sdict)
        cfg.model.validate()
        cfg.train.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg


def seed_stream(seed: int, name: str) -> np.random.Generator:
    """Independent, reproducible generator for a named component."""
    digest = hashlib.sha256(name.encode()).digest()
    return np.random.default_rng(np.random.SeedSequence([int(seed), int.from_bytes(digest[:8], "big")]))
