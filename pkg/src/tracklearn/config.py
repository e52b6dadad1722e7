"""Run configuration: one flat record of every tunable in the system.

Defaults are the production values (filter size 16, shape domain 71x71,
112 trackers on a 14x8 grid, 2-sigma ellipses, 61x61 patches, and so on);
desk-scale runs override via YAML config files. Environment variables
prefixed ``TRACKLEARN_`` override file values field by field, and explicit
CLI flags override both.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import yaml

from .errors import ConfigError

ENV_PREFIX = "TRACKLEARN_"


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1

    # preprocessing
    downsample: int = 2
    whiten_cutoff: float = 200.0      # cycles/image
    mhi_decay: float = 1.0 / 15.0
    mhi_diff_thresh: float = 0.1

    # filter bank (stand-in generator; a learned bank file overrides it)
    filter_count: int = 24
    filter_size: int = 16

    # feature selection (response histograms are fixed at 64 bins)
    n_select: int = 6
    patch_scale: int = 3

    # tracker population
    grid_rows: int = 8
    grid_cols: int = 14
    shape_dim: int = 71
    v_max: int = 16
    vigilance: float = 0.3
    accel_sigma: float = 0.5
    shape_drift_sigma: float = 0.5
    shape_prior_sigma: float = 12.0
    init_pos_sigma: float = 12.0
    init_vel_sigma: float = 1.0
    shape_measure_mode: str = "argmax"
    ellipse_scale: float = 2.0

    # classification
    classes: tuple = ("car", "person", "cyclist", "clutter")
    patch_size: int = 61
    mask_radius: int = 30
    jitter_sigma: float = 10.0
    pool_size: int = 18
    pool_stride: int = 6
    scnn_hidden: int = 12000
    slfn_hidden: int = 320
    shape_hidden: int = 12800

    # evaluation
    overlap_threshold: float = 0.2

    def __post_init__(self):
        self.classes = tuple(self.classes)
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigError("tracker grid must be at least 1x1")
        if self.shape_dim % 2 == 0:
            raise ConfigError("shape_dim must be odd")
        if not 0.0 <= self.vigilance <= 1.0:
            raise ConfigError("vigilance must lie in [0, 1]")
        if self.downsample < 1:
            raise ConfigError("downsample must be >= 1")

    def sef_params(self):
        from .shape_filter import SefParams
        return SefParams(
            shape_dim=self.shape_dim, v_max=self.v_max,
            vigilance=self.vigilance, accel_sigma=self.accel_sigma,
            shape_drift_sigma=self.shape_drift_sigma,
            shape_prior_sigma=self.shape_prior_sigma,
            init_pos_sigma=self.init_pos_sigma,
            init_vel_sigma=self.init_vel_sigma,
            shape_measure_mode=self.shape_measure_mode)

    def tracker_config(self):
        from .tracker import TrackerConfig
        return TrackerConfig(
            grid_rows=self.grid_rows, grid_cols=self.grid_cols,
            n_select=self.n_select, n_features=self.filter_count + 1,
            patch_scale=self.patch_scale, ellipse_scale=self.ellipse_scale,
            sef=self.sef_params())


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name, value):
    field = _FIELDS[name]
    try:
        if field.type in ("int",):
            return int(value)
        if field.type in ("float",):
            return float(value)
        if field.type in ("str",):
            return str(value)
        if field.type in ("tuple",):
            if isinstance(value, str):
                return tuple(v.strip() for v in value.split(","))
            return tuple(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name!r}: {value!r} ({exc})")
    return value


def load_config(path=None, env=True, overrides=None):
    """Build a RunConfig from an optional YAML file, the environment, and
    explicit overrides (in increasing priority)."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError:
            raise
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} is not a mapping")
        for key, val in data.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r} in {path}")
            raw[key] = _coerce(key, val)
    if env:
        for key in _FIELDS:
            env_key = ENV_PREFIX + key.upper()
            if env_key in os.environ:
                raw[key] = _coerce(key, os.environ[env_key])
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in _FIELDS:
                raise ConfigError(f"unknown config override {key!r}")
            raw[key] = _coerce(key, val)
    return RunConfig(**raw)


def save_config(path, cfg):
    """Write the effective configuration; re-parsing yields an equal config."""
    data = dataclasses.asdict(cfg)
    data["classes"] = list(cfg.classes)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)
