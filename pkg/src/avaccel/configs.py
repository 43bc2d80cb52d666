"""JSON config schemas for the command-line tools.

Every command reads a single JSON object; unknown keys are rejected so a
typo fails loudly instead of silently using a default. Values are
validated here once, and the commands can assume a well-formed config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .features import WINDOW
from .models import IMAGE_SHAPE, MODEL_KINDS
from .scenario import ScenarioConfig

__all__ = ["load_json", "GenConfig", "TrainCommandConfig", "EvalCommandConfig",
           "PlotConfig", "BenchConfig", "DEFAULT_STEP_BUDGETS"]


def load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p} must hold a JSON object, got {type(data).__name__}")
    return data


def _reject_unknown(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")


def _require(d: dict, *names):
    missing = [n for n in names if n not in d]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")


@dataclass
class GenConfig:
    """Dataset generation: N tar directories of 25 segments each."""

    out_dir: str
    tars: int
    seed: int = 0
    segments_per_tar: int = 25
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if self.tars < 1:
            raise ConfigError(f"tars must be >= 1, got {self.tars}")
        if self.segments_per_tar < 1:
            raise ConfigError(f"segments_per_tar must be >= 1, got {self.segments_per_tar}")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        _reject_unknown(cls, d)
        _require(d, "out_dir", "tars")
        scenario = d.pop("scenario", None)
        cfg = cls(**d)
        if scenario is not None:
            if not isinstance(scenario, dict):
                raise ConfigError("scenario must be a JSON object")
            cfg.scenario = ScenarioConfig.from_dict(scenario)
        return cfg


def _check_split(train_tars: int, val_tars: int):
    if train_tars < 1:
        raise ConfigError(f"train_tars must be >= 1, got {train_tars}")
    if val_tars < 1:
        raise ConfigError(f"val_tars must be >= 1, got {val_tars}")


@dataclass
class TrainCommandConfig:
    """One training run: model kind, data split, optimizer settings."""

    model: str
    dataset: str
    out_dir: str
    epochs: int
    train_tars: int = 1
    val_tars: int = 2
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    shuffle: bool = True
    window_size: int = WINDOW
    image_h: int = IMAGE_SHAPE[0]
    image_w: int = IMAGE_SHAPE[1]
    base_model: str = None  # advanced only: path to a trained cnn .avnm

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {sorted(MODEL_KINDS)}, "
                              f"got {self.model!r}")
        _check_split(self.train_tars, self.val_tars)
        if self.window_size != WINDOW:
            raise ConfigError(f"window_size is fixed at {WINDOW}")
        if (self.image_h, self.image_w) != IMAGE_SHAPE[:2]:
            raise ConfigError(f"models are defined for {IMAGE_SHAPE[0]}x"
                              f"{IMAGE_SHAPE[1]} images")
        if self.base_model is not None and self.model != "advanced":
            raise ConfigError("base_model only applies to the advanced model")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainCommandConfig":
        _reject_unknown(cls, d)
        _require(d, "model", "dataset", "out_dir", "epochs")
        return cls(**d)


@dataclass
class EvalCommandConfig:
    """Score a saved model on one split of a dataset."""

    model_path: str
    dataset: str
    split: str = "val"
    train_tars: int = 1
    val_tars: int = 2

    def __post_init__(self):
        if self.split not in ("train", "val"):
            raise ConfigError(f"split must be train or val, got {self.split!r}")
        _check_split(self.train_tars, self.val_tars)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalCommandConfig":
        _reject_unknown(cls, d)
        _require(d, "model_path", "dataset")
        return cls(**d)


@dataclass
class PlotConfig:
    """Loss-curve SVG: input CSVs and the output path."""

    inputs: list
    out: str = "loss.svg"

    def __post_init__(self):
        if not self.inputs:
            raise ConfigError("plot needs at least one loss CSV")
        if not all(isinstance(p, str) for p in self.inputs):
            raise ConfigError("inputs must be a list of paths")

    @classmethod
    def from_dict(cls, d: dict) -> "PlotConfig":
        _reject_unknown(cls, d)
        _require(d, "inputs")
        return cls(**d)


# Per-model optimizer-step budgets for bench cells. Cells at different data
# sizes get the same step count so the comparison is equal-compute, which
# means each budget must be large enough for the *largest* size to reach its
# plateau — image-only training converges slowest per step and needs the
# deepest budget.
DEFAULT_STEP_BUDGETS = {
    "baseline": 2000,
    "cnn": 3000,
    "cnn_nn": 1200,
    "cnn_lstm": 500,
    "advanced": 800,
}


@dataclass
class BenchConfig:
    """Data-size trend sweep: all models at several tar counts and seeds."""

    dataset: str
    out_dir: str
    seed: int = 0
    seeds: int = 3
    sizes: list = field(default_factory=lambda: [1, 10])
    val_tars: int = 2
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    step_budgets: dict = field(default_factory=lambda: dict(DEFAULT_STEP_BUDGETS))
    workers: int = 1

    def __post_init__(self):
        if self.seeds < 1:
            raise ConfigError(f"seeds must be >= 1, got {self.seeds}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if (not self.sizes or len(set(self.sizes)) != len(self.sizes)
                or any(not isinstance(s, int) or s < 1 for s in self.sizes)):
            raise ConfigError("sizes must be distinct positive tar counts")
        self.sizes = sorted(self.sizes)
        unknown = sorted(set(self.step_budgets) - set(MODEL_KINDS))
        if unknown:
            raise ConfigError(f"step_budgets has unknown models: {', '.join(unknown)}")
        budgets = dict(DEFAULT_STEP_BUDGETS)
        budgets.update(self.step_budgets)
        if any(not isinstance(v, int) or v < 1 for v in budgets.values()):
            raise ConfigError("step budgets must be positive integers")
        self.step_budgets = budgets

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        _reject_unknown(cls, d)
        _require(d, "dataset", "out_dir")
        return cls(**d)
