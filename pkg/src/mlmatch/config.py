"""Layered configuration: built-in defaults < YAML file < command-line flags."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .encoder import EncoderConfig, make_configs
from .training import TrainConfig

DEFAULTS = {
    "data": {
        "lines_per_segment": 4,
        "min_count": 10,
        "split_ratio": 0.8,
        "melody_line_range": [3, 11],
        "lyrics_line_range": [2, 10],
        "seed": 0,
    },
    "encoder": {
        "preset": "desk",
        "model_dim": None,
        "layers": None,
        "heads": None,
        "feedforward_dim": None,
        "max_len": 512,
        "dropout": 0.0,
        "positional": True,
    },
    "train": TrainConfig().to_dict(),
    "retrieval": {"alpha": None, "keep_fraction": 0.5, "topk": 10, "direction": "melody2lyrics"},
    "evaluate": {"method": "mlm", "with_plain": True, "top": 5, "seed": 0},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in out:
            raise ConfigError(f"unknown config key {where}{k}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file, then non-None ``overrides`` ({section: {key: value}})."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, doc)
    for section, values in (overrides or {}).items():
        cfg = _merge(cfg, {section: {k: v for k, v in values.items() if v is not None}})
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        train_config(cfg)
        encoder_configs(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    d = cfg["data"]
    if d["lines_per_segment"] < 1 or d["min_count"] < 1 or not 0 < d["split_ratio"] < 1:
        raise ConfigError("data: lines_per_segment >= 1, min_count >= 1, 0 < split_ratio < 1 required")
    r = cfg["retrieval"]
    if not 0 < r["keep_fraction"] <= 1:
        raise ConfigError("retrieval.keep_fraction must be in (0, 1]")
    if r["alpha"] is not None and not 0 <= r["alpha"] <= 1:
        raise ConfigError("retrieval.alpha must be in [0, 1]")


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"])


def encoder_configs(cfg: dict) -> tuple[EncoderConfig, EncoderConfig]:
    enc = {k: v for k, v in cfg["encoder"].items() if v is not None}
    preset = enc.pop("preset", "desk")
    if preset not in ("desk", "reference"):
        raise ConfigError(f"unknown encoder preset {preset!r}")
    return make_configs(preset, **enc)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def dump_defaults() -> str:
    return yaml.safe_dump(DEFAULTS, sort_keys=False)
