"""Run configuration: TOML file keys with CLI-flag overrides (flags win)."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

from .errors import ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "prior": {"kind": "projected-gp", "knots_rows": 12, "knots_cols": 10, "degree": 3},
    "mcmc": {
        "chains": 2,
        "iters": 1000,
        "warmup": 500,
        "seed": 1,
        "leapfrog": 16,
        "max_leapfrog": 64,
    },
    "simulate": {
        "grid_size": 30,
        "gamma": 0.25,
        "train_fraction": 0.4,
        "nu": 0.2,
        "knots": 10,
        "compare_knots": 30,
    },
    "benchmark": {"train_n": 2000, "test_n": 2000, "knots": 125},
    "fit": {"retained_draws": 500},
    "meta": {"gamma_convention": "shape-rate", "search_from": 2},
    "lambda_prior": {"sd_factor": 1.0},
}


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Merge defaults, an optional TOML file, and flag overrides, in order."""
    config = json.loads(json.dumps(DEFAULTS))  # deep copy
    if path is not None:
        with open(path, "rb") as fh:
            file_cfg = tomllib.load(fh)
        for section, values in file_cfg.items():
            if not isinstance(values, dict):
                raise ValidationError(f"config section {section!r} must be a table")
            config.setdefault(section, {}).update(values)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        config.setdefault(section, {})[key] = value
    return config


def config_hash(config: dict) -> str:
    """Stable short hash of the resolved configuration."""
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def output_header(config: dict, seed: int) -> str:
    return f"# config_hash={config_hash(config)} seed={seed}\n"


def ensure_outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out
