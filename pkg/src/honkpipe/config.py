"""Pipeline configuration: built-in defaults < TOML file < command-line overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "audio": {"window_s": 1.0, "hop_s": 1.0, "spl_offset_db": 0.0},
    "spectrogram": {"fft_size": 256, "hop": 128, "taper": "Hann", "floor_db": -80.0, "image_size": 224},
    "synth": {"preset": "smoke"},
    "labeling": {
        "method": "mae", "latent_dim": 32, "input_size": 64, "epochs": 50, "lr": 0.003, "batch": 16,
        "min_samples": 50, "head_epochs": 150, "head_lr": 0.003, "amp_gate": 0.05,
        "n_groups": 5, "refit_per_group": True, "seed_frac": 0.3, "gan_epochs": 15,
    },
    "augment": {"variants": 2, "max_width_frac": 0.1, "n_masks": [1, 2]},
    "train": {
        "optimizer": "adam", "epochs": 20, "lr": 0.001, "batch": 312, "input_size": 224,
        "freeze": False, "arch": "tiny", "ensemble": 4, "partition": False,
    },
    # Context thresholds were tuned against the synthetic scene generator only.
    "context": {"market_frac": 0.8, "hwv_low": 0.1, "busy_rate": 2.0, "quiet_rate": 1.0, "slot_s": 300.0},
}


def _merge(base: dict, over: dict, where: str = "") -> dict:
    for key, val in over.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}' must be a table")
            _merge(base[key], val, path + ".")
            continue
        ref = base[key]
        if isinstance(ref, bool) and not isinstance(val, bool):
            raise ConfigError(f"'{path}' must be true/false, got {val!r}")
        if isinstance(ref, (int, float)) and not isinstance(ref, bool):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"'{path}' must be numeric, got {val!r}")
            val = float(val) if isinstance(ref, float) else val
            if isinstance(ref, int) and not isinstance(val, int):
                raise ConfigError(f"'{path}' must be an integer, got {val!r}")
        if isinstance(ref, str) and not isinstance(val, str):
            raise ConfigError(f"'{path}' must be a string, got {val!r}")
        base[key] = val
    return base


def parse_override(item: str) -> dict:
    """``section.key=value`` -> nested dict; the value is read as a TOML literal, else a string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        val = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        val = raw
    out: dict = {}
    cur = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = val
    return out


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            _merge(cfg, tomllib.loads(p.read_text(encoding="utf-8")))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    for ov in overrides:
        _merge(cfg, ov if isinstance(ov, dict) else parse_override(ov))
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
