"""JSON configuration mirroring the dataclass fields one to one.

Strict by design: a key that no field matches is a config error naming the
full path, so typos fail fast instead of silently training with defaults.
Missing keys fall back to the dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Any

from .attention import WindowSpec
from .codec import ModelConfig
from .corpus import CorpusSpec
from .errors import ConfigError
from .noise import NoiseConfig
from .optim import LrSchedule
from .training import StagePlan, default_plan


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key '{path}.{sorted(unknown)[0]}'")


def _build(cls, d: dict, path: str, converters: dict | None = None):
    """Construct a dataclass from a dict, strict about key names."""
    if not isinstance(d, dict):
        raise ConfigError(f"'{path}' must be a JSON object")
    fields = {f.name for f in dataclasses.fields(cls)}
    _check_keys(d, fields, path)
    kwargs: dict[str, Any] = {}
    for k, v in d.items():
        conv = (converters or {}).get(k)
        kwargs[k] = conv(v, f"{path}.{k}") if conv else v
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad value under '{path}': {e}")


def window_from_dict(d: dict, path: str) -> WindowSpec:
    return _build(WindowSpec, d, path)


def noise_from_dict(d: dict, path: str) -> NoiseConfig:
    cfg = _build(NoiseConfig, d, path)
    if isinstance(cfg.active, list):
        cfg = dataclasses.replace(cfg, active=tuple(bool(a) for a in cfg.active))
    return cfg


def model_from_dict(d: dict, path: str = "model") -> ModelConfig:
    cfg = _build(ModelConfig, d, path, converters={
        "enc_window": window_from_dict,
        "dec_window": window_from_dict,
        "noise": noise_from_dict,
    })
    cfg.validate()
    return cfg


def model_to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["noise"]["active"] = list(cfg.noise.active)
    return d


def schedule_from_dict(d: dict, path: str) -> LrSchedule:
    return _build(LrSchedule, d, path)


def plan_from_dict(stage: int, d: dict, path: str) -> StagePlan:
    if not isinstance(d, dict):
        raise ConfigError(f"'{path}' must be a JSON object")
    fields = {f.name for f in dataclasses.fields(StagePlan)} - {"stage"}
    _check_keys(d, fields, path)
    kwargs: dict[str, Any] = {}
    for k, v in d.items():
        if k == "schedule":
            kwargs[k] = schedule_from_dict(v, f"{path}.schedule")
        elif k == "trainable":
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    try:
        plan = default_plan(stage, **kwargs)
    except TypeError as e:
        raise ConfigError(f"bad value under '{path}': {e}")
    return plan


def corpus_from_dict(d: dict, path: str = "corpus") -> CorpusSpec:
    spec = _build(CorpusSpec, d, path)
    spec.validate()
    return spec


@dataclasses.dataclass
class TrainConfig:
    model: ModelConfig
    stages: dict[int, StagePlan]
    seed: int = 0


def train_config_from_dict(d: dict) -> TrainConfig:
    _check_keys(d, {"model", "stages", "seed"}, "config")
    model = model_from_dict(d.get("model", {}))
    stages: dict[int, StagePlan] = {}
    raw_stages = d.get("stages", {})
    if not isinstance(raw_stages, dict):
        raise ConfigError("'config.stages' must be a JSON object")
    for key, sub in raw_stages.items():
        if str(key) not in ("1", "2", "3"):
            raise ConfigError(f"unknown key 'config.stages.{key}'")
        stage = int(key)
        stages[stage] = plan_from_dict(stage, sub, f"stages.{key}")
    seed = d.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("'config.seed' must be an integer")
    return TrainConfig(model=model, stages=stages, seed=seed)


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return doc


def load_train_config(path: str) -> TrainConfig:
    return train_config_from_dict(_load_json(path))


def load_corpus_spec(path: str) -> CorpusSpec:
    return corpus_from_dict(_load_json(path), path="spec")
