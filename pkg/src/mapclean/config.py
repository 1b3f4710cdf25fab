"""Benchmark configuration schema and INI-style parsing.

One section per method holds its core tuning keys; optional extras live in a
``<method>.advanced`` section so the core parameter counts reported by
``compare`` stay meaningful. Unknown sections or keys are hard errors: a
silently ignored typo would corrupt a benchmark comparison.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path

from .erasor import ErasorConfig
from .octomap import OctomapConfig
from .removert import RemovertConfig

METHODS = ("removert", "erasor", "octomap", "octomap_g", "octomap_gf")

_OCTOMAP_BASE = {
    "voxel_size": 0.1,
    "p_hit": 0.7,
    "p_miss": 0.4,
    "occupancy_threshold": 0.5,
    "max_ray_length": 60.0,
}
_OCTOMAP_GROUND = {
    "sac_dist_thresh": 0.1,
    "sac_max_iters": 100,
    "min_ground_inlier_ratio": 0.2,
}
_OCTOMAP_SOR = {
    "sor_k": 10,
    "sor_std_mult": 1.0,
}
_OCTOMAP_ADVANCED = {
    "clamp_min": -2.0,
    "clamp_max": 3.5,
}

CORE_DEFAULTS: dict[str, dict] = {
    "removert": {
        "azimuth_res_deg": 0.4,
        "revert_res_deg": (0.55, 0.7),
        "tau_d": 0.1,
        "fov_up_deg": 3.0,
        "fov_down_deg": -25.0,
        "min_votes": 1,
    },
    "erasor": {
        "n_rings": 20,
        "n_sectors": 60,
        "max_range": 60.0,
        "ratio_thresh": 0.2,
        "min_bin_points": 5,
        "rgpf_iterations": 3,
        "rgpf_ground_thresh": 0.125,
        "rgpf_seed_quantile": 0.2,
        "sensor_height": 0.0,
    },
    "octomap": dict(_OCTOMAP_BASE),
    "octomap_g": {**_OCTOMAP_BASE, **_OCTOMAP_GROUND},
    "octomap_gf": {**_OCTOMAP_BASE, **_OCTOMAP_GROUND, **_OCTOMAP_SOR},
}

ADVANCED_DEFAULTS: dict[str, dict] = {
    "removert": {},
    "erasor": {},
    "octomap": dict(_OCTOMAP_ADVANCED),
    "octomap_g": dict(_OCTOMAP_ADVANCED),
    "octomap_gf": dict(_OCTOMAP_ADVANCED),
}

# comparisons across methods are only fair if the core sets stay this small
_CORE_BUDGET = {"removert": 6, "octomap": 5}
for _m, _budget in _CORE_BUDGET.items():
    if len(CORE_DEFAULTS[_m]) > _budget:
        raise AssertionError(f"{_m} core key set exceeds its budget of {_budget}")


class ConfigError(ValueError):
    """Raised for unknown sections/keys or unparseable values."""


def core_parameter_count(method: str) -> int:
    return len(CORE_DEFAULTS[method])


def default_params(method: str) -> dict:
    if method not in METHODS:
        raise ConfigError(f"unknown method '{method}'; choose from {', '.join(METHODS)}")
    return {**CORE_DEFAULTS[method], **ADVANCED_DEFAULTS[method]}


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(",", " ").split() if p]
            return tuple(float(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse '{raw}'")


def load_config(path=None) -> dict[str, dict]:
    """Effective per-method parameter dicts (defaults overlaid by the file)."""
    params = {m: default_params(m) for m in METHODS}
    if path is None:
        return params
    parser = configparser.ConfigParser()
    read = parser.read(Path(path))
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        if section.endswith(".advanced"):
            method = section[: -len(".advanced")]
            schema = ADVANCED_DEFAULTS.get(method)
        else:
            method = section
            schema = CORE_DEFAULTS.get(method)
        if method not in METHODS or schema is None:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(
                    f"unknown key '{key}' in [{section}] (known: {', '.join(sorted(schema))})"
                )
            params[method][key] = _coerce(section, key, raw, schema[key])
    return params


def method_config(params: dict[str, dict], method: str, seed: int = 0):
    """Build the method's config object from the effective parameter dict."""
    p = params[method]
    if method == "removert":
        return RemovertConfig(**p)
    if method == "erasor":
        return ErasorConfig(**p)
    variant = {"octomap": "baseline", "octomap_g": "g", "octomap_gf": "gf"}[method]
    return OctomapConfig(variant=variant, seed=seed, **p)


def config_sha256(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()
