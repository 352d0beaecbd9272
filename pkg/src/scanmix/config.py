"""Run configuration: defaults, strict validation, and dotted overrides.

A run config is a plain nested dict mirrored by `default_config()`.
Validation is strict: unknown keys are rejected so typos fail fast, and
every value is type- and range-checked before any work starts.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .partition import KINDS, PartitionSpec, partition_spec
from .sensor import SensorConfig
from .synth import SceneParams
from .train import Hyperparams


def default_config() -> dict:
    return {
        "seed": 0,
        "out": "out",
        "sensor": {
            "num_beams": 16,
            "incl_up": 10.0,
            "incl_down": 30.0,
            "width": 128,
            "max_range": 50.0,
        },
        "partition": {"kind": "inclination", "m": 4, "lo": None, "hi": None, "seed": 0},
        "model": {"channels": [8, 16]},
        "hyper": {
            "T": 0.9,
            "lambda_mix": 1.0,
            "lambda_mt": 1.0,
            "ema_decay": 0.95,
            "lr": 0.1,
            "batch": 2,
            "m_lo": 2,
            "m_hi": 6,
        },
        "split": {"labeled_fraction": 0.1, "seed": 0},
        "synth": {
            "n_scans": 100,
            "n_eval": 20,
            "n_cars": [3, 7],
            "n_walls": [10, 16],
            "n_vegetation": [10, 18],
            "n_trunks": [4, 8],
            "car_band": [8.0, 22.0],
            "wall_band": [24.0, 42.0],
            "vegetation_band": [24.0, 48.0],
            "trunk_band": [24.0, 48.0],
            "sensor_height": 1.8,
            "world_radius": 60.0,
            "noise_sigma": 0.02,
        },
        "data": {"train_dir": None, "eval_dir": None},
        "train": {
            "iterations": 300,
            "eval_every": 0,
            "checkpoint_every": 0,
            "strategy": "beam",
        },
        "ablate": {
            "strategies": ["beam", "cutmix", "mixup", "cutout", "reversed", "shuffled"],
            "seeds": [0, 1],
            "sweep_m": [],
            "sweep_ema": [],
            "sweep_t": [],
        },
    }


_STRATEGY_NAMES = ("beam", "reversed", "shuffled", "cutmix", "mixup", "cutout", "sup_only")


def _merge(base: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here} must be an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None, overrides=()) -> dict:
    """Defaults, then the config file, then dotted overrides; validated."""
    cfg = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {path}: line {e.lineno} column {e.colno}") from e
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, user, "")
    for dotted, raw in overrides:
        _apply_override(cfg, dotted, raw)
    validate_config(cfg)
    return cfg


def _apply_override(cfg: dict, dotted: str, raw: str) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key: {dotted}")
    try:
        node[leaf] = json.loads(raw)
    except json.JSONDecodeError:
        node[leaf] = raw  # bare strings land as-is


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate_config(cfg: dict) -> None:
    _expect(isinstance(cfg.get("seed"), int), "seed must be an integer")
    _expect(isinstance(cfg.get("out"), str) and cfg["out"], "out must be a non-empty string")
    try:
        sensor_from_config(cfg)
        hyper_from_config(cfg)
        scene_params_from_config(cfg)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(str(e)) from e
    p = cfg["partition"]
    _expect(p["kind"] in KINDS, f"partition.kind must be one of {KINDS}")
    _expect(isinstance(p["m"], int) and p["m"] >= 1, "partition.m must be a positive integer")
    ch = cfg["model"]["channels"]
    _expect(
        isinstance(ch, list) and ch and all(isinstance(c, int) and c >= 1 for c in ch),
        "model.channels must be a non-empty list of positive integers",
    )
    s = cfg["split"]
    _expect(0.0 <= s["labeled_fraction"] <= 1.0, "split.labeled_fraction must be in [0,1]")
    _expect(isinstance(s["seed"], int), "split.seed must be an integer")
    sy = cfg["synth"]
    _expect(sy["n_scans"] >= 1, "synth.n_scans must be >= 1")
    _expect(sy["n_eval"] >= 0, "synth.n_eval must be >= 0")
    t = cfg["train"]
    _expect(t["iterations"] >= 1, "train.iterations must be >= 1")
    _expect(t["eval_every"] >= 0, "train.eval_every must be >= 0")
    _expect(t["checkpoint_every"] >= 0, "train.checkpoint_every must be >= 0")
    _expect(t["strategy"] in _STRATEGY_NAMES, f"train.strategy must be one of {_STRATEGY_NAMES}")
    a = cfg["ablate"]
    for name in a["strategies"]:
        _expect(name in _STRATEGY_NAMES, f"unknown ablate strategy {name!r}")
    _expect(
        all(isinstance(s_, int) for s_ in a["seeds"]) and a["seeds"],
        "ablate.seeds must be a non-empty list of integers",
    )


def sensor_from_config(cfg: dict) -> SensorConfig:
    s = cfg["sensor"]
    return SensorConfig(
        num_beams=int(s["num_beams"]),
        incl_up=float(s["incl_up"]),
        incl_down=float(s["incl_down"]),
        width=int(s["width"]),
        max_range=float(s["max_range"]),
    )


def partition_from_config(cfg: dict, sensor: SensorConfig) -> PartitionSpec:
    p = cfg["partition"]
    lo, hi = p["lo"], p["hi"]
    if lo is None or hi is None:
        defaults = {
            "inclination": (sensor.incl_lo, sensor.incl_up),
            "azimuth": (-180.0, 180.0),
            "radius": (0.0, sensor.max_range),
            "random_point": (0.0, 1.0),
            "random_area": (0.0, sensor.max_range),
        }
        d_lo, d_hi = defaults[p["kind"]]
        lo = d_lo if lo is None else lo
        hi = d_hi if hi is None else hi
    return partition_spec(p["kind"], int(p["m"]), float(lo), float(hi), int(p["seed"]))


def hyper_from_config(cfg: dict) -> Hyperparams:
    h = cfg["hyper"]
    return Hyperparams(
        threshold=float(h["T"]),
        lambda_mix=float(h["lambda_mix"]),
        lambda_mt=float(h["lambda_mt"]),
        ema_decay=float(h["ema_decay"]),
        lr=float(h["lr"]),
        batch=int(h["batch"]),
        m_lo=int(h["m_lo"]),
        m_hi=int(h["m_hi"]),
    )


def scene_params_from_config(cfg: dict) -> SceneParams:
    sy = cfg["synth"]
    pair = lambda key: (sy[key][0], sy[key][1])
    return SceneParams(
        n_cars=pair("n_cars"),
        n_walls=pair("n_walls"),
        n_vegetation=pair("n_vegetation"),
        n_trunks=pair("n_trunks"),
        car_band=pair("car_band"),
        wall_band=pair("wall_band"),
        vegetation_band=pair("vegetation_band"),
        trunk_band=pair("trunk_band"),
        sensor_height=float(sy["sensor_height"]),
        world_radius=float(sy["world_radius"]),
        noise_sigma=float(sy["noise_sigma"]),
    )


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
