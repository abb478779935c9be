"""JSON run configuration.

A document holds up to four sections whose keys are the dataclass field
names; anything unrecognised is an error::

    {
      "model": {"image_size": [32, 32], "msb_filters": [32, 64, 128, 256]},
      "train": {"max_epochs": 300, "batch_size": 128, "seed": 1},
      "classifier": {"epochs": 40},
      "substitution": {"k": 4, "repetitions": 2, "n_normal": 96, "n_abnormal": 96}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from ..evaluator.classifier import ClassifierConfig
from ..model import TideConfig
from ..trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class SubstitutionSettings:
    k: int = 10
    repetitions: int = 10
    n_normal: int = 728
    n_abnormal: int = 227
    seed: int = 0


@dataclass
class RunConfig:
    model: TideConfig = field(default_factory=TideConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    substitution: SubstitutionSettings = field(default_factory=SubstitutionSettings)


_SECTIONS = {"model": TideConfig, "train": TrainConfig, "classifier": ClassifierConfig,
             "substitution": SubstitutionSettings}


def _build(cls, doc: Any, section: str):
    if not isinstance(doc, Mapping):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {section!r}; allowed: {sorted(allowed)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {section!r}: {exc}") from None


def parse_config(doc: Any) -> RunConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config document must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}; allowed: {sorted(_SECTIONS)}")
    return RunConfig(**{name: _build(cls, doc[name], name) for name, cls in _SECTIONS.items() if name in doc})


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_config(doc)
