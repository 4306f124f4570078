"""Run configuration: JSON files with strict (unknown keys rejected) schema."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .exceptions import ConfigError

MODEL_DEFAULTS: dict = {
    "layers": 3,
    "hidden": 64,
    "heads": 1,
    "alpha": 0.8,
    "theta": 0.1,
    "dropout": 0.2,
    "gate_enabled": True,
    "w_bce": 1.0,
    "w_imp": 0.01,
}

TRAIN_DEFAULTS: dict = {
    "epochs": 100,
    "batch_size": 32,
    "lr": 0.001,
    "patience": 30,
    "min_delta": 0.0001,
    "seed": 0,
}

PREP_DEFAULTS: dict = {
    "cell_frac": 0.7,
    "drug_frac": 0.6,
    "val_frac": 0.2,
    "ic50_threshold": -4.595,
    "select_k": None,
    "seed": 0,
}

_SECTIONS = {"model": MODEL_DEFAULTS, "train": TRAIN_DEFAULTS, "prep": PREP_DEFAULTS}


@dataclass(frozen=True)
class RunConfig:
    """Merged configuration for the CLI, defaults plus file overrides."""

    model: dict = field(default_factory=lambda: dict(MODEL_DEFAULTS))
    train: dict = field(default_factory=lambda: dict(TRAIN_DEFAULTS))
    prep: dict = field(default_factory=lambda: dict(PREP_DEFAULTS))


def _merge_section(name: str, defaults: Mapping, overrides: Mapping) -> dict:
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {name}.{key!r}; valid keys: {sorted(defaults)}")
        merged[key] = value
    return merged


def load_config(path: Optional[str | Path]) -> RunConfig:
    """Defaults, overlaid with the JSON file at ``path`` when given."""
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for section in raw:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}; valid sections: {sorted(_SECTIONS)}")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"section {section!r} must be a JSON object")
    return RunConfig(
        model=_merge_section("model", MODEL_DEFAULTS, raw.get("model", {})),
        train=_merge_section("train", TRAIN_DEFAULTS, raw.get("train", {})),
        prep=_merge_section("prep", PREP_DEFAULTS, raw.get("prep", {})),
    )
