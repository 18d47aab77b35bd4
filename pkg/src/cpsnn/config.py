"""Configuration dataclasses and strict JSON (de)serialization."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

ABLATIONS = ("full", "no_warp", "no_slow", "no_fast")
MODEL_KINDS = ("cpsnn", "snn_fixed", "snn_adaptive")


@dataclass
class ModelHyperparams:
    """Layer-level hyperparameters shared by all model kinds."""

    channels: int
    hidden: int = 64
    classes: int = 2
    alpha_m: float = 0.9          # membrane decay
    alpha_f: float = 0.9          # fast-trace decay
    alpha_s: float = 0.995        # slow-trace base decay
    lambda_f: float = 0.5         # fast-trace mixing coefficient
    lambda_s: float = 0.5         # slow-trace mixing coefficient
    theta: float = 1.0            # spike threshold
    surrogate_width: float = 1.0  # support half-width of the spike surrogate
    warp_floor: float = 0.0       # lower clamp on the warp controller output
    ablation: str = "full"
    detach_reset: bool = False    # stop gradients through the reset gate
    unscaled_input: bool = False  # adaptive baseline: drop the (1 - decay) input scaling

    def validate(self) -> None:
        if self.channels < 1 or self.hidden < 1 or self.classes < 1:
            raise ConfigError("channels, hidden, and classes must be positive")
        for name in ("alpha_m", "alpha_f", "alpha_s"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie strictly in (0,1), got {v}")
        if self.alpha_f >= self.alpha_s:
            raise ConfigError(
                "alpha_f must be smaller than alpha_s (timescale separation)"
            )
        if self.lambda_f < 0 or self.lambda_s < 0:
            raise ConfigError("mixing coefficients must be nonnegative")
        if self.theta <= 0:
            raise ConfigError("theta must be positive")
        if self.surrogate_width <= 0:
            raise ConfigError("surrogate_width must be positive")
        if not 0.0 <= self.warp_floor < 1.0:
            raise ConfigError("warp_floor must lie in [0,1)")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}")


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 1.0
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    train_mixing: bool = False  # make the trace mixing coefficients trainable

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0,1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


@dataclass
class TaskConfig:
    channels: int = 8
    horizon: int = 100
    gap_min: int = 10
    gap_max: int = 60
    distractor_rate: float = 0.05
    n_samples: int = 2000
    seed: int = 0

    def validate(self) -> None:
        if self.channels < 2:
            raise ConfigError("channels must be at least 2")
        if self.horizon < 2:
            raise ConfigError("horizon must be at least 2")
        if not 1 <= self.gap_min <= self.gap_max <= self.horizon - 1:
            raise ConfigError(
                "gap range must satisfy 1 <= gap_min <= gap_max <= horizon-1"
            )
        if not 0.0 <= self.distractor_rate < 1.0:
            raise ConfigError("distractor_rate must lie in [0,1)")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")


@dataclass
class OutputPaths:
    metrics: str = "metrics.csv"
    profile: str = "grad_profile.csv"
    model: str = "model.json"


@dataclass
class RunConfig:
    """One self-contained experiment description."""

    model: ModelHyperparams
    training: TrainingConfig = field(default_factory=TrainingConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    model_kind: str = "cpsnn"
    outputs: OutputPaths = field(default_factory=OutputPaths)

    def validate(self) -> None:
        self.model.validate()
        self.training.validate()
        self.task.validate()
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model_kind!r}")


def _dataclass_from_dict(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object at {path or 'top level'}")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(field_map)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} at {path or 'top level'}"
        )
    kwargs = {}
    for name, value in data.items():
        f = field_map[name]
        if dataclasses.is_dataclass(f.type) or f.type in (
            "ModelHyperparams",
            "TrainingConfig",
            "TaskConfig",
            "OutputPaths",
        ):
            sub_cls = {
                "ModelHyperparams": ModelHyperparams,
                "TrainingConfig": TrainingConfig,
                "TaskConfig": TaskConfig,
                "OutputPaths": OutputPaths,
            }[f.type if isinstance(f.type, str) else f.type.__name__]
            kwargs[name] = _dataclass_from_dict(sub_cls, value, f"{path}{name}.")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def run_config_from_dict(data: dict) -> RunConfig:
    cfg = _dataclass_from_dict(RunConfig, data)
    cfg.validate()
    return cfg


def run_config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_run_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return run_config_from_dict(data)


def save_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(run_config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
