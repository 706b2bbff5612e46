"""Strict JSON experiment configuration.

One document with sections ``data``, ``model``, ``loss``, ``train`` and
``eval`` plus top-level ``seed`` and ``variants``. Unknown keys and wrongly
typed values are rejected with a :class:`ConfigError` naming the field.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

from .losses import LossConfig
from .model import ModelConfig
from .synthdata import HierarchySpec
from .train import TrainConfig


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class DataConfig:
    depth: int = 3
    branching: int = 4
    patches: int = 4
    patch_dim: int = 32
    noise: float = 0.1
    filler_rate: float = 0.2
    n_fillers: int = 16
    n_train: int = 512
    n_test: int = 256

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")

    def hierarchy(self, seed: int) -> HierarchySpec:
        return HierarchySpec(self.depth, self.branching, self.patches, self.patch_dim, self.noise,
                             self.filler_rate, self.n_fillers, seed)


@dataclass(frozen=True)
class TrainSection:
    steps: int = 2000
    batch_size: int = 64
    lr: float = 3e-3
    lr_start: float = 3e-5
    lr_min: float = 3e-4
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.05
    rtp_window: int = 0
    log_interval: int = 10

    def __post_init__(self):
        TrainConfig(**dataclasses.asdict(self))  # same checks as the trainer


@dataclass(frozen=True)
class EvalConfig:
    ks: Tuple[int, ...] = (1, 5, 10)

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("ks must be positive integers")


# (loss overrides, train overrides) per comparison row
VARIANTS: Dict[str, Tuple[dict, dict]] = {
    "euclidean-baseline": ({"space": "euclidean", "similarity": "cosine"}, {}),
    "euclidean-rqs": ({"space": "euclidean", "similarity": "cosine", "rqs": True}, {}),
    "euclidean-rqs-rtp": ({"space": "euclidean", "similarity": "cosine", "rqs": True}, {"rtp_window": 7}),
    "hyperbolic-baseline": ({"space": "hyperbolic", "similarity": "cosine"}, {}),
    "hyperbolic-poincare": ({"space": "hyperbolic", "similarity": "poincare"}, {}),
    "hyperbolic-rqs": ({"space": "hyperbolic", "similarity": "cosine", "rqs": True}, {}),
    "hyperbolic-rtp": ({"space": "hyperbolic", "similarity": "cosine"}, {"rtp_window": 7}),
    "hyperbolic-rqs-rtp": ({"space": "hyperbolic", "similarity": "cosine", "rqs": True}, {"rtp_window": 7}),
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    variants: Tuple[str, ...] = tuple(VARIANTS)

    def __post_init__(self):
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError("variants", f"unknown variant {v!r}; choose from {sorted(VARIANTS)}")
        if self.model.patch_dim != self.data.patch_dim:
            raise ConfigError("model.patch_dim", f"must equal data.patch_dim ({self.data.patch_dim})")

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, loss=self.loss, **dataclasses.asdict(self.train))

    def variant(self, name: str) -> "ExperimentConfig":
        loss_kw, train_kw = VARIANTS[name]
        return dataclasses.replace(self, loss=dataclasses.replace(self.loss, **loss_kw),
                                   train=dataclasses.replace(self.train, **train_kw))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["eval"]["ks"] = list(self.eval.ks)
        out["variants"] = list(self.variants)
        return out


SECTIONS = {"data": DataConfig, "model": ModelConfig, "loss": LossConfig, "train": TrainSection, "eval": EvalConfig}


def _coerce(path: str, value: Any, default: Any):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(_coerce(f"{path}[{i}]", v, default[0]) if default else v for i, v in enumerate(value))
    return value


def _section(name: str, cls, raw: Any):
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected an object")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown field")
        kwargs[key] = _coerce(f"{name}.{key}", value, getattr(defaults, key))
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        words = str(exc).split()
        where = f"{name}.{words[0]}" if words and words[0] in known else name
        raise ConfigError(where, str(exc)) from exc


def from_dict(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    kwargs: Dict[str, Any] = {}
    for key, value in raw.items():
        if key in SECTIONS:
            kwargs[key] = _section(key, SECTIONS[key], value)
        elif key == "seed":
            kwargs["seed"] = _coerce("seed", value, 0)
        elif key == "variants":
            kwargs["variants"] = _coerce("variants", value, ("",))
        else:
            raise ConfigError(key, "unknown field")
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("<root>", str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return from_dict(raw)

