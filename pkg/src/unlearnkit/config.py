"""Experiment configuration: JSON schema, defaults, dotted-key overrides.

A config document has the top-level keys ``dataset``, ``model``, ``forget``,
``train``, ``unlearn``, ``seed`` and ``out_dir``.  Omitted keys take the
defaults in :data:`DEFAULTS`; unknown keys are rejected.  See the README for
the meaning of every field.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

from unlearnkit.errors import ConfigError

_TRAIN = {"epochs": 10, "batch_size": 64, "learning_rate": 1e-2, "momentum": 0.9}
_STAGE = {"epochs": 1, "batch_size": 64, "learning_rate": 1e-3, "momentum": 0.9}
_ERASE = dict(_STAGE, batch_size=48)

DEFAULTS: dict[str, Any] = {
    "dataset": {
        "kind": "synth",
        "root": None,
        "train_limit": None,
        "test_limit": None,
        "num_classes": 10,
        "per_class": 200,
        "test_per_class": 50,
        "image_side": 28,
        "channels": 1,
    },
    "model": {"channels": [8, 16], "kernel": 3, "padding": 1, "pool": 2},
    "forget": {"mode": "class", "classes": [3], "fraction": None},
    "train": dict(_TRAIN),
    "unlearn": {
        "tau_erase": 2.0,
        "tau_reconstruct": 2.0,
        "alpha": 0.1,
        "kl_tau2_scaling": False,
        "erase": dict(_ERASE),
        "reconstruct": dict(_STAGE),
    },
    "seed": 0,
    "out_dir": "runs/default",
}

# leaf type per dotted key; "?" suffix means null is allowed
_STAGE_TYPES = {"epochs": "int", "batch_size": "int", "learning_rate": "float", "momentum": "float"}
TYPES: dict[str, Any] = {
    "dataset": {
        "kind": "str",
        "root": "str?",
        "train_limit": "int?",
        "test_limit": "int?",
        "num_classes": "int",
        "per_class": "int",
        "test_per_class": "int",
        "image_side": "int",
        "channels": "int",
    },
    "model": {"channels": "int_list", "kernel": "int", "padding": "int", "pool": "int"},
    "forget": {"mode": "str", "classes": "int_list", "fraction": "float?"},
    "train": dict(_STAGE_TYPES),
    "unlearn": {
        "tau_erase": "float",
        "tau_reconstruct": "float",
        "alpha": "float",
        "kl_tau2_scaling": "bool",
        "erase": dict(_STAGE_TYPES),
        "reconstruct": dict(_STAGE_TYPES),
    },
    "seed": "int",
    "out_dir": "str",
}

DATASET_KINDS = ("synth", "mnist", "fashion_mnist", "cifar10")


def _type_ok(value: Any, kind: str) -> bool:
    if kind.endswith("?"):
        if value is None:
            return True
        kind = kind[:-1]
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "int_list":
        return isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    raise AssertionError(kind)


def _describe(kind: str) -> str:
    base = {"int": "an integer", "float": "a number", "bool": "true/false", "str": "a string",
            "int_list": "a list of integers"}[kind.rstrip("?")]
    return base + (" or null" if kind.endswith("?") else "")


def _merge(base: dict, update: dict, types: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in types:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(types[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted!r} must be an object")
            out[key] = _merge(base[key], value, types[key], f"{dotted}.")
        else:
            if not _type_ok(value, types[key]):
                raise ConfigError(f"{dotted!r} must be {_describe(types[key])}, got {value!r}")
            out[key] = float(value) if types[key].startswith("float") and value is not None else value
    return out


def resolve(document: dict | None = None) -> dict:
    """Merge ``document`` over the defaults, checking keys and leaf types."""
    cfg = _merge(DEFAULTS, document or {}, TYPES)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    if cfg["dataset"]["kind"] not in DATASET_KINDS:
        raise ConfigError(f"'dataset.kind' must be one of {DATASET_KINDS}, got {cfg['dataset']['kind']!r}")
    if cfg["forget"]["mode"] not in ("class", "fraction"):
        raise ConfigError(f"'forget.mode' must be 'class' or 'fraction', got {cfg['forget']['mode']!r}")
    if cfg["forget"]["mode"] == "fraction" and cfg["forget"]["fraction"] is None:
        raise ConfigError("'forget.fraction' is required when forget.mode is 'fraction'")
    fraction = cfg["forget"]["fraction"]
    if fraction is not None and not 0 < fraction < 1:
        raise ConfigError(f"'forget.fraction' must lie in (0, 1), got {fraction}")
    if cfg["forget"]["mode"] == "class" and not cfg["forget"]["classes"]:
        raise ConfigError("'forget.classes' must list at least one class")
    for key in ("num_classes", "per_class", "test_per_class", "image_side", "channels"):
        if cfg["dataset"][key] < 1:
            raise ConfigError(f"'dataset.{key}' must be positive, got {cfg['dataset'][key]}")
    for prefix, stage in (("train", cfg["train"]), ("unlearn.erase", cfg["unlearn"]["erase"]),
                          ("unlearn.reconstruct", cfg["unlearn"]["reconstruct"])):
        for key in ("epochs", "batch_size"):
            if stage[key] < 1:
                raise ConfigError(f"'{prefix}.{key}' must be at least 1, got {stage[key]}")
        if not stage["learning_rate"] > 0:
            raise ConfigError(f"'{prefix}.learning_rate' must be positive, got {stage['learning_rate']}")
        if not 0 <= stage["momentum"] < 1:
            raise ConfigError(f"'{prefix}.momentum' must lie in [0, 1), got {stage['momentum']}")
    u = cfg["unlearn"]
    for key in ("tau_erase", "tau_reconstruct"):
        if not u[key] > 0:
            raise ConfigError(f"'unlearn.{key}' must be positive, got {u[key]}")
    if not u["alpha"] >= 0:
        raise ConfigError(f"'unlearn.alpha' must be non-negative, got {u['alpha']}")


def load(path: str | os.PathLike) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return resolve(doc)


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``key=value``; the value is read as JSON, falling back to a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_override(cfg: dict, key: str, value: Any) -> dict:
    parts = key.split(".")
    types: Any = TYPES
    for part in parts[:-1]:
        if not isinstance(types, dict) or part not in types or not isinstance(types[part], dict):
            raise ConfigError(f"unknown config key {key!r}")
        types = types[part]
    if parts[-1] not in types or isinstance(types[parts[-1]], dict):
        raise ConfigError(f"unknown config key {key!r}")
    if not _type_ok(value, types[parts[-1]]):
        raise ConfigError(f"{key!r} must be {_describe(types[parts[-1]])}, got {value!r}")
    update: dict = {}
    node = update
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    out = _merge(cfg, update, TYPES)
    validate(out)
    return out


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)
