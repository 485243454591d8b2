"""Run configuration: JSON document with typed sections, dotted overrides,
strict unknown-key rejection, and a short content hash for run naming."""

from __future__ import annotations

import copy
import hashlib
import json
import os

from .errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "codec": {"spatial_factor": 4, "temporal_factor": 1},
    "model": {
        "dim": 64, "hidden": 128, "blocks": 4, "patch": [1, 2, 2],
        "channels": 3, "time_freqs": 32, "gelu": True,
    },
    "schedule": {"kind": "linear-flow", "steps": 50},
    "train": {
        "lr": 0.05, "batch_size": 4, "steps": 2000, "omega": "uniform",
        "momentum": 0.9, "literal_eq2": False, "use_pose": True,
        "checkpoint_every": 500,
    },
    "sampler": {"tau_inj": 0.8, "injection_level": "current"},
    "composite": {"dilate_radius": 6, "blur_sigma": 4.0},
    "synth": {
        "train_clips": 512, "eval_clips": 64, "frames": 16,
        "height": 64, "width": 64, "head_radius": 20.0,
    },
    "eval": {"dub_seed": 0},
    "paths": {"out": "runs"},
}


def _merge(base, update, path=""):
    for key, value in update.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(here, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(here, f"expected a section, got {type(value).__name__}")
            _merge(base[key], value, here)
        else:
            base[key] = _coerce(here, value, base[key])


def _coerce(key, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(key, f"expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected a number, got {value!r}") from None
    if isinstance(default, list):
        if isinstance(value, str):
            try:
                value = json.loads(value)
            except json.JSONDecodeError:
                raise ConfigError(key, f"expected a list, got {value!r}") from None
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    return value


def apply_override(cfg: dict, spec: str) -> None:
    """Apply one ``section.key=value`` dotted override in place."""
    if "=" not in spec:
        raise ConfigError(spec, "override must look like section.key=value")
    dotted, raw = spec.split("=", 1)
    parts = dotted.strip().split(".")
    node, defaults = cfg, DEFAULTS
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(dotted, "unknown key")
        node, defaults = node[p], defaults[p]
    leaf = parts[-1]
    if leaf not in node or isinstance(node[leaf], dict):
        raise ConfigError(dotted, "unknown key")
    node[leaf] = _coerce(dotted, raw, defaults[leaf])


def _validate(cfg: dict) -> None:
    if not 0.0 <= cfg["sampler"]["tau_inj"] <= 1.0:
        raise ConfigError("sampler.tau_inj",
                          f"must be in [0, 1], got {cfg['sampler']['tau_inj']}")
    if cfg["sampler"]["injection_level"] not in ("current", "next"):
        raise ConfigError("sampler.injection_level", "must be 'current' or 'next'")
    if cfg["schedule"]["kind"] not in ("linear-flow", "variance-preserving"):
        raise ConfigError("schedule.kind",
                          "must be 'linear-flow' or 'variance-preserving'")
    if cfg["schedule"]["steps"] < 1:
        raise ConfigError("schedule.steps", "must be >= 1")
    if cfg["train"]["omega"] not in ("uniform", "mid-weighted"):
        raise ConfigError("train.omega", "must be 'uniform' or 'mid-weighted'")
    if len(cfg["model"]["patch"]) != 3:
        raise ConfigError("model.patch", "must have three entries")
    if cfg["composite"]["blur_sigma"] <= 0:
        raise ConfigError("composite.blur_sigma", "must be > 0")
    if cfg["composite"]["dilate_radius"] < 0:
        raise ConfigError("composite.dilate_radius", "must be >= 0")
    for sect, key in (("synth", "frames"), ("synth", "height"), ("synth", "width")):
        if cfg[sect][key] < 1:
            raise ConfigError(f"{sect}.{key}", "must be >= 1")


def load_config(path=None, overrides=()) -> dict:
    """Resolve defaults + optional JSON file + dotted overrides; validate."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(str(path), f"invalid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError(str(path), "top level must be an object")
        _merge(cfg, doc)
    for spec in overrides:
        apply_override(cfg, spec)
    _validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


def write_resolved(cfg: dict, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as f:
        json.dump(cfg, f, indent=1, sort_keys=True)


def model_config_from(cfg: dict):
    """Build the network configuration implied by synth + codec + model sections."""
    from .velocity import ModelConfig

    sy, co, mo = cfg["synth"], cfg["codec"], cfg["model"]
    latent = (sy["frames"] // co["temporal_factor"],
              sy["height"] // co["spatial_factor"],
              sy["width"] // co["spatial_factor"])
    return ModelConfig(
        channels=mo["channels"], dim=mo["dim"], hidden=mo["hidden"],
        blocks=mo["blocks"], patch=tuple(mo["patch"]), latent=latent,
        time_freqs=mo["time_freqs"], gelu=mo["gelu"],
    )
