"""One YAML configuration shared by every CLI stage and the pipeline.

Sections map onto the library's config dataclasses; unknown keys are an
error so a typo never silently falls back to a default.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any

import yaml

from .ldm import DenoiserConfig, LdmTrainConfig
from .play import PlayConfig
from .vae import VaeConfig, VaeTrainConfig


class ConfigError(ValueError):
    pass


# file and selector arguments of the CLI stages; top-level keys in a config file
PATH_KEYS = ("data", "vae", "ldm", "raw_ldm", "latents", "task", "method", "raw", "out")


def _defaults() -> dict[str, Any]:
    den = asdict(DenoiserConfig())
    den.pop("latent_dim")
    den.pop("length")
    play = asdict(PlayConfig())
    play["segment"], play["amplitude"] = list(play["segment"]), list(play["amplitude"])
    return {
        "seed": 0,
        "paths": {k: None for k in PATH_KEYS},
        "play": play,
        "vae_net": asdict(VaeConfig()),
        "vae_train": asdict(VaeTrainConfig()),
        "denoiser": den,
        "ldm_train": asdict(LdmTrainConfig()),
        "raw_ldm_train": None,  # no-skill ablation model; None reuses ldm_train
        "methods": {
            "d-cubed": {"B": 16},
            "no-skill": {"B": 16},
            "mppi": {},
            "skill-mppi": {},
            "classifier": {},
            "diffusion-es": {},
        },
        "bench": {
            "seeds": 3,
            "record_wall_time": False,
            "no_skill_H": 10,
            "runs": [
                {"tasks": ["gather-to-disc", "fold-line"], "methods": ["d-cubed", "mppi", "diffusion-es"]},
                {"tasks": ["gather-to-disc"], "methods": ["d-cubed:B=2", "d-cubed:B=8", "d-cubed:B=32"]},
                {"tasks": ["elongate"], "methods": ["d-cubed", "no-skill"]},
            ],
        },
    }


DEFAULTS = _defaults()


def default_config() -> dict[str, Any]:
    return copy.deepcopy(DEFAULTS)


def merge(base: dict, over: dict, path: str = "") -> dict:
    """Recursive update; keys must already exist in ``base`` except under free-form maps."""
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        where = f"{path}{k}"
        if k not in out and not path.startswith("methods."):
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict[str, Any]:
    """Defaults, then the file (if any), then ``overrides`` (CLI flags win)."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        cfg = merge(cfg, _split_paths(data))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k in PATH_KEYS:
            cfg["paths"][k] = v
        elif k in cfg and not isinstance(cfg[k], dict):
            cfg[k] = v
        else:
            raise ConfigError(f"unknown override {k!r}")
    return cfg


def _split_paths(data: dict) -> dict:
    """Top-level path-like keys (``data``, ``vae``, ``out``, ...) move under ``paths``."""
    data = dict(data)
    paths = dict(data.pop("paths", {}) or {})
    for k in PATH_KEYS:
        if k in data:
            paths[k] = data.pop(k)
    out = dict(data)
    if paths:
        out["paths"] = paths
    return out


def build(cls, d: dict | None, **fixed):
    """Instantiate a config dataclass, rejecting unknown keys."""
    d = {**(d or {}), **fixed}
    names = {f.name for f in fields(cls)}
    bad = set(d) - names
    if bad:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(bad)}")
    if cls is PlayConfig:
        return PlayConfig.from_dict(d)
    return cls(**d)
