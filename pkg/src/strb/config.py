"""Run configuration: built-in profiles overlaid with an optional TOML file."""

from __future__ import annotations

import copy
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


_DESK = {
    "problem": {"kind": "thermal_block", "vertices_per_side": 13, "time_elements": 30, "final_time": 3.0},
    "parameters": {},
    "greedy": {"train_size": 500, "L1": 1, "L2": 2, "max_rounds": 19, "tol": 1e-3,
               "estimator": "eta_c_abs", "certify_estimator": "eta_star_abs", "start": "reference"},
    "validation": {"size": 20},
    "solver": {"tol": 1e-10},
    "run": {"seed": 0},
}

PROFILES = {
    "desk": _DESK,
    "paper": {
        "problem": {"vertices_per_side": 22, "time_elements": 60},
        "greedy": {"train_size": 5000},
    },
}

_SCHEMA = {
    "problem": {"kind": str, "vertices_per_side": int, "time_elements": int, "final_time": float},
    "parameters": {"lower": list, "upper": list, "log_scale": list, "reference": list},
    "greedy": {"train_size": int, "L1": int, "L2": int, "max_rounds": int, "tol": float,
               "estimator": str, "certify_estimator": str, "start": (str, list)},
    "validation": {"size": int},
    "solver": {"tol": float},
    "run": {"seed": int},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> dict:
    for table, body in cfg.items():
        if table not in _SCHEMA:
            raise ConfigError(f"unknown config table [{table}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{table}] must be a table")
        for key, val in body.items():
            if key not in _SCHEMA[table]:
                raise ConfigError(f"unknown key {key!r} in [{table}]")
            want = _SCHEMA[table][key]
            if want is float and isinstance(val, int) and not isinstance(val, bool):
                body[key] = float(val)
            elif isinstance(val, bool) or not isinstance(val, want):
                raise ConfigError(f"[{table}] {key} has type {type(val).__name__}")
    return cfg


def load_config(path=None, profile: str = "desk") -> dict:
    """Desk defaults, then ``profile`` overrides, then the file at ``path``."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    cfg = _DESK if profile == "desk" else _merge(_DESK, PROFILES[profile])
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
        cfg = _merge(cfg, user)
    return validate(copy.deepcopy(cfg))
