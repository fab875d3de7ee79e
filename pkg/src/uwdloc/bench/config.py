"""Experiment configuration: YAML file plus command-line overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from ..estimators import SearchVolume
from ..geometry import DEFAULT_SOURCE_BOX, Scene, scene_from_dict, scene_to_dict
from ..nn import NetworkConfig, TrainOptions

ESTIMATORS = ("oracle-mfp", "sbl", "gcc-phat", "cnn")


class ConfigError(ValueError):
    """Invalid experiment configuration (a usage error, not a data error)."""


@dataclass(frozen=True)
class ExperimentConfig:
    scene: Scene = field(default_factory=lambda: scene_from_dict({}))
    prior_box: tuple = tuple(map(tuple, DEFAULT_SOURCE_BOX))
    snr_db: tuple = (-10.0, 0.0, 10.0, 20.0, 30.0)
    trials: int = 100
    records_per_snr: int = 100
    dynamic: bool = False
    rel_std: float = 0.01
    noise_file: str | None = None
    estimators: tuple = ("oracle-mfp", "sbl", "gcc-phat")
    seed: int = 0
    search: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    checkpoint: str | None = None
    include_truth: bool = True
    workers: int = 1
    plot: bool = True

    def __post_init__(self):
        box = np.asarray(self.prior_box, dtype=float)
        if box.shape != (3, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ConfigError(f"prior box must be three increasing (min, max) pairs, got {self.prior_box}")
        if not (box[2, 0] > 0 and box[2, 1] < self.scene.env.h):
            raise ConfigError("prior box depth range must lie strictly inside the water column")
        if self.trials < 1 or self.records_per_snr < 1:
            raise ConfigError("trials and records_per_snr must be >= 1")
        if len(self.snr_db) == 0:
            raise ConfigError("SNR list must not be empty")
        if any(np.isnan(s) for s in self.snr_db):
            raise ConfigError("SNR values must not be NaN")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown or not self.estimators:
            raise ConfigError(f"unknown estimator(s) {unknown}; choose from {', '.join(ESTIMATORS)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "prior_box", tuple(map(tuple, box.tolist())))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        try:
            self.volume()
            self.network_config()
            self.train_options()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def volume(self):
        return SearchVolume(box=self.prior_box, **self.search)

    def network_config(self, **kw):
        return NetworkConfig.from_dict({**self.network, **kw})

    def train_options(self):
        return TrainOptions(**self.training)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["scene"] = scene_to_dict(self.scene)
        d["prior_box"] = [list(r) for r in self.prior_box]
        d["snr_db"] = list(self.snr_db)
        d["estimators"] = list(self.estimators)
        return d


def config_from_dict(d):
    d = dict(d or {})
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    try:
        if "scene" in d:
            d["scene"] = scene_from_dict(d["scene"])
        for k in ("snr_db", "estimators"):
            if k in d and isinstance(d[k], (str, int, float)):
                d[k] = [d[k]]
        return ExperimentConfig(**d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None):
    if path is None:
        return ExperimentConfig()
    try:
        with open(Path(path)) as f:
            d = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if d is not None and not isinstance(d, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_dict(d)
