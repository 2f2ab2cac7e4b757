"""Plain-text key=value run configuration.

A config file mirrors `TrainConfig` field names exactly, plus dotted keys
for the latent and length priors:

    lr_g = 1e-4
    n_critic = 5
    lipschitz_mode = spectral_norm
    latent.noise_dim = 64
    latent.n_categories = 60
    length.offset = 20
    length.alpha = 12.5

Lines starting with '#' and blank lines are ignored. Unknown keys are
rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .priors import LatentConfig, LengthPrior
from .training import TrainConfig


@dataclass
class RunConfig:
    train: TrainConfig
    latent: LatentConfig
    length: LengthPrior


def parse_config_text(text: str) -> dict:
    """Key = value lines to a string mapping; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _coerce(dc_type, name: str, raw: str):
    for f in fields(dc_type):
        if f.name == name:
            if f.type in ("int", int):
                return int(raw)
            if f.type in ("float", float):
                return float(raw)
            return raw
    raise ConfigError(f"unknown config key {name!r} for {dc_type.__name__}")


def run_config_from_mapping(mapping: dict) -> RunConfig:
    train_kw, latent_kw, length_kw = {}, {}, {}
    for key, raw in mapping.items():
        if key.startswith("latent."):
            name = key[len("latent."):]
            latent_kw[name] = _coerce(LatentConfig, name, raw)
        elif key.startswith("length."):
            name = key[len("length."):]
            length_kw[name] = _coerce(LengthPrior, name, raw)
        else:
            train_kw[key] = _coerce(TrainConfig, key, raw)
    return RunConfig(train=TrainConfig(**train_kw),
                     latent=LatentConfig(**latent_kw),
                     length=LengthPrior(**length_kw))


def load_run_config(path) -> RunConfig:
    return run_config_from_mapping(parse_config_text(Path(path).read_text()))


def default_run_config() -> RunConfig:
    return RunConfig(train=TrainConfig(), latent=LatentConfig(),
                     length=LengthPrior())
