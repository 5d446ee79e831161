"""Pipeline configuration: YAML file + flag overrides, validated up front.

One config file describes an experiment end to end; command-line flags win
over file values. Unknown keys are rejected so typos fail before any work
starts. The effective config is echoed into the output directory and its
digest keys every result.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import yaml

from .errors import ConfigError

# Section -> key -> default. None means "unset"; type checks come from the
# default's type when it is not None.
SCHEMA: dict = {
    "seed": 0,
    "output_dir": "out",
    "cache_dir": "cache",
    "variants_per_label": 1,
    "finetune_epochs": 5,
    "long_tail": False,
    "few_shot": None,
    "holdout_fraction": "0.2",
    "adversarial_dir": None,
    "descriptions_file": None,
    "dataset": {
        "name": "dataset",
        "manifest": None,
        "image_dir": None,
        "domain": None,
        "width": 32,
        "height": 32,
    },
    "captions": {"path": None, "format": "coco_json", "split": None},
    "labels": {"file": None},
    "backends": {
        "t2t": "stub",
        "t2i": "stub",
        "t2t_command": None,
        "t2i_command": None,
    },
    "decode": {"max_length": 20, "beam_size": 5},
    "plan": {"ratio": "1.0", "prompt_source": "label"},
    "train": {
        "epochs": 200,
        "batch_size": 128,
        "base_lr": 0.1,
        "momentum": 0.9,
        "weight_decay": 0.0005,
        "milestones": [60, 120, 160],
        "gamma": 0.2,
        "warmup_epochs": 10,
        "seeds": [7, 17, 42],
        "loss": "cross_entropy",
        "model": "smallconv",
    },
    "sweep": {"ratios": ["0.2", "0.5", "1.0"], "max_ratios": ["2.0", "3.0", "4.0", "5.0"]},
}

CACHE_ENV_VAR = "GENAUG_CACHE"


def _merge(schema: dict, user: dict, prefix: str = "") -> dict:
    out = {}
    for key, default in schema.items():
        if isinstance(default, dict):
            sub = user.get(key, {})
            if sub is None:
                sub = {}
            if not isinstance(sub, dict):
                raise ConfigError(f"config section {prefix}{key} must be a mapping")
            out[key] = _merge(default, sub, prefix=f"{prefix}{key}.")
        else:
            out[key] = user.get(key, default)
    unknown = sorted(set(user) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> dict:
    """Load and validate a config, applying dotted-key overrides (flags win)."""
    user: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        user = loaded
    cfg = _merge(SCHEMA, user)
    for dotted, value in (overrides or {}).items():
        apply_override(cfg, dotted, value)
    _validate(cfg)
    return cfg


def apply_override(cfg: dict, dotted: str, value) -> None:
    """Set a config value by dotted path, coercing to the schema's type."""
    parts = dotted.split(".")
    node = SCHEMA
    target = cfg
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node = node[p]
        target = target[p]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node or isinstance(node[leaf], dict):
        raise ConfigError(f"unknown config key: {dotted}")
    target[leaf] = _coerce(node[leaf], value, dotted)


def _coerce(default, value, dotted: str):
    if value is None or not isinstance(value, str):
        return value
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{dotted}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(value)
        except ValueError as e:
            raise ConfigError(f"{dotted}: expected an integer, got {value!r}") from e
    if isinstance(default, float):
        try:
            return float(value)
        except ValueError as e:
            raise ConfigError(f"{dotted}: expected a number, got {value!r}") from e
    if isinstance(default, list):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def _validate(cfg: dict) -> None:
    if cfg["variants_per_label"] < 1:
        raise ConfigError("variants_per_label must be >= 1")
    if cfg["finetune_epochs"] < 1:
        raise ConfigError("finetune_epochs must be >= 1")
    if cfg["plan"]["prompt_source"] not in ("label", "description"):
        raise ConfigError("plan.prompt_source must be 'label' or 'description'")
    if cfg["captions"]["format"] not in ("coco_json", "tsv"):
        raise ConfigError("captions.format must be 'coco_json' or 'tsv'")
    if cfg["backends"]["t2t"] not in ("stub", "subprocess"):
        raise ConfigError("backends.t2t must be 'stub' or 'subprocess'")
    if cfg["backends"]["t2i"] not in ("stub", "subprocess"):
        raise ConfigError("backends.t2i must be 'stub' or 'subprocess'")
    if cfg["train"]["model"] != "smallconv":
        raise ConfigError(f"unknown classifier model: {cfg['train']['model']!r}")


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def echo_config(cfg: dict, output_dir: str | Path) -> Path:
    """Write the effective config (deterministic bytes) into the output dir."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.effective.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")
    return path


def cache_root(cfg: dict) -> Path:
    """Cache directory; the GENAUG_CACHE environment variable overrides."""
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else Path(cfg["cache_dir"])
