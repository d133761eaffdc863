"""Run configuration: JSON schema, defaults and per-dataset presets."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema

from .errors import ConfigurationError
from .model import ArchitectureConfig
from .training import TrainConfig

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}
_INT_LIST = {"type": "array", "items": {"type": "integer"}}

RUN_SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset"],
    "properties": {
        "name": {"type": "string"},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["sources"],
            "properties": {
                "sources": {"type": "array", "minItems": 1, "items": {"type": "string", "minLength": 1}},
                "target": {"type": ["string", "null"]},
            },
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fractions": {**_NUMBER_LIST, "minItems": 3, "maxItems": 3},
                "sizes": {"oneOf": [{"type": "null"}, {**_INT_LIST, "minItems": 3, "maxItems": 3}]},
                "seed": {"type": "integer"},
            },
        },
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "primary_threshold": {"type": ["number", "null"], "minimum": 0},
                "fallback_threshold": {"type": ["number", "null"], "minimum": 0},
                "self_loop": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "auto"}]},
                "allow_isolated": {"type": "boolean"},
            },
        },
        "oversample": {"type": "boolean"},
        "architecture": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "layers": {"enum": [6, 3, 1]},
                "embed_dim": {"type": "integer", "minimum": 1},
                "mp_widths": _INT_LIST,
                "bn_after": _INT_LIST,
                "residual": _INT_LIST,
                "readout_widths": _INT_LIST,
                "readout_bn_after": _INT_LIST,
                "head": {"enum": ["interpretable", "opaque"]},
                "opaque_hidden": {"type": "integer", "minimum": 1},
                "bn_momentum": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "bn_eps": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 2},
                "patience": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "clamp": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "progress": {"type": "boolean"},
            },
        },
        "output_dir": {"type": "string"},
    },
}

DEFAULTS: dict = {
    "name": "run",
    "dataset": {"target": None},
    "split": {"fractions": [0.6, 0.2, 0.2], "sizes": None, "seed": 42},
    "graph": {"primary_threshold": 0.2, "fallback_threshold": 0.05, "self_loop": "auto", "allow_isolated": False},
    "oversample": True,
    "architecture": {"layers": 6},
    "training": {},
    "output_dir": "runs",
}

# Dataset presets: thresholds, self-loop weights and epoch budgets per dataset.
# Offline sources follow the OpenML id as fallbacks.
PRESETS: dict[str, dict] = {
    "abalone": {
        "name": "abalone",
        "dataset": {"sources": ["openml:720"]},
        "graph": {"self_loop": 20},
        "training": {"epochs": 220},
    },
    "waveform5000": {
        "name": "waveform5000",
        "dataset": {"sources": ["openml:979", "generator:waveform5000"]},
        "graph": {"self_loop": 4},
        "training": {"epochs": 97},
    },
    "phonemes": {
        "name": "phonemes",
        "dataset": {"sources": ["openml:1489", "keel:phoneme"]},
        "split": {"sizes": [3782, 811, 811]},
        "graph": {"self_loop": 1},
        "training": {"epochs": 800},
    },
    "adult": {
        "name": "adult",
        "dataset": {"sources": ["openml:1590"]},
        "split": {"sizes": [43957, 2443, 2442]},
        "graph": {"self_loop": 4},
        "training": {"epochs": 297},
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _json_path(error: jsonschema.ValidationError) -> str:
    path = "$"
    for part in error.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def validate_document(doc: Any) -> None:
    """Schema check. The error message starts with the JSON path of the
    offending value (``$.training.epochs``)."""
    validator = jsonschema.Draft202012Validator(RUN_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = _json_path(err)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            path += f".{extra[0]}" if extra else ""
            raise ConfigurationError(f"{path}: unknown key")
        raise ConfigurationError(f"{path}: {err.message}")


def resolve(doc: dict, preset: Optional[str] = None) -> dict:
    """Validate ``doc`` and fill in defaults, starting from ``preset`` when
    given (keys in ``doc`` win)."""
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        doc = _merge(PRESETS[preset], doc)
    validate_document(doc)
    full = _merge(DEFAULTS, doc)
    validate_document(full)
    return full


def load_config(path: Union[str, Path, None] = None, preset: Optional[str] = None) -> dict:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"$: config is not valid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError("$: config must be a JSON object")
        preset = doc.pop("preset", preset)
    return resolve(doc, preset)


def architecture_from(config: dict, n_classes: int) -> ArchitectureConfig:
    arch = dict(config["architecture"])
    layers = arch.pop("layers", 6)
    arch = {k: tuple(v) if isinstance(v, list) else v for k, v in arch.items()}
    result = ArchitectureConfig.with_layers(layers, n_classes=n_classes, **arch)
    result.validate()
    return result


def training_from(config: dict) -> TrainConfig:
    train = TrainConfig(**config["training"])
    train.validate()
    return train
