"""Trainable parameter containers, initialization, and snapshot files."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .config import ModelHyperparams, _dataclass_from_dict
from .errors import ConfigError, DataFormatError

SNAPSHOT_FORMAT_VERSION = 1


@dataclass
class CPSNNParams:
    """All trainable tensors of one warped-trace layer.

    ``w_ctrl`` maps the concatenated (input spikes, previous slow trace)
    vector to the pre-sigmoid warp logits; ``lam_f``/``lam_s`` are 0-d arrays
    so the optimizer can treat every field uniformly (they only move when
    mixing-coefficient training is enabled).
    """

    w_in: np.ndarray    # (H, C)
    w_ctrl: np.ndarray  # (C, 2C)
    b_ctrl: np.ndarray  # (C,)
    w_out: np.ndarray   # (classes, H)
    b_out: np.ndarray   # (classes,)
    lam_f: np.ndarray   # ()
    lam_s: np.ndarray   # ()


@dataclass
class FixedSNNParams:
    w_in: np.ndarray    # (H, C)
    w_out: np.ndarray   # (classes, H)
    b_out: np.ndarray   # (classes,)


@dataclass
class AdaptiveSNNParams:
    w_in: np.ndarray     # (H, C)
    u_decay: np.ndarray  # (H, C) input weights of the membrane-decay controller
    a_decay: np.ndarray  # (H,)   bias of the membrane-decay controller
    w_out: np.ndarray    # (classes, H)
    b_out: np.ndarray    # (classes,)


PARAM_CLASSES = {
    "cpsnn": CPSNNParams,
    "snn_fixed": FixedSNNParams,
    "snn_adaptive": AdaptiveSNNParams,
}


def param_items(params):
    """(name, array) pairs in declaration order."""
    return [(f.name, getattr(params, f.name)) for f in dataclasses.fields(params)]


def zeros_like_params(params):
    cls = type(params)
    return cls(**{name: np.zeros_like(arr) for name, arr in param_items(params)})


def copy_params(params):
    cls = type(params)
    return cls(**{name: arr.copy() for name, arr in param_items(params)})


def check_finite(params) -> None:
    for name, arr in param_items(params):
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"parameter {name} contains non-finite entries")


def init_cpsnn_params(hp: ModelHyperparams, rng: np.random.Generator) -> CPSNNParams:
    """Variance-preserving input weights, zero readout, warp ~ 1 at init.

    The controller starts at weights 0 and bias +4, so sigmoid(4) ~ 0.982
    puts the warp factor near 1 and the layer initially behaves like a
    fixed-decay slow trace.
    """
    C, H, K = hp.channels, hp.hidden, hp.classes
    return CPSNNParams(
        w_in=rng.normal(0.0, 1.0 / math.sqrt(C), size=(H, C)),
        w_ctrl=np.zeros((C, 2 * C)),
        b_ctrl=np.full(C, 4.0),
        w_out=np.zeros((K, H)),
        b_out=np.zeros(K),
        lam_f=np.asarray(hp.lambda_f, dtype=np.float64),
        lam_s=np.asarray(hp.lambda_s, dtype=np.float64),
    )


def init_fixed_params(hp: ModelHyperparams, rng: np.random.Generator) -> FixedSNNParams:
    C, H, K = hp.channels, hp.hidden, hp.classes
    return FixedSNNParams(
        w_in=rng.normal(0.0, 1.0 / math.sqrt(C), size=(H, C)),
        w_out=np.zeros((K, H)),
        b_out=np.zeros(K),
    )


def init_adaptive_params(hp: ModelHyperparams,
                         rng: np.random.Generator) -> AdaptiveSNNParams:
    """Decay controller starts constant at alpha_m (logit bias, zero weights)."""
    C, H, K = hp.channels, hp.hidden, hp.classes
    logit = math.log(hp.alpha_m / (1.0 - hp.alpha_m))
    return AdaptiveSNNParams(
        w_in=rng.normal(0.0, 1.0 / math.sqrt(C), size=(H, C)),
        u_decay=np.zeros((H, C)),
        a_decay=np.full(H, logit),
        w_out=np.zeros((K, H)),
        b_out=np.zeros(K),
    )


INITIALIZERS = {
    "cpsnn": init_cpsnn_params,
    "snn_fixed": init_fixed_params,
    "snn_adaptive": init_adaptive_params,
}


def save_snapshot(path, model_kind: str, hp: ModelHyperparams, params) -> None:
    """Write a versioned, human-inspectable JSON parameter snapshot."""
    doc = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "model_kind": model_kind,
        "hyperparams": dataclasses.asdict(hp),
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in param_items(params)
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_snapshot(path):
    """Read a snapshot; returns (model_kind, hyperparams, params)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON in model file {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != SNAPSHOT_FORMAT_VERSION:
        raise DataFormatError(
            f"model file {path} has format_version {version!r}, "
            f"this build reads version {SNAPSHOT_FORMAT_VERSION}"
        )
    kind = doc.get("model_kind")
    if kind not in PARAM_CLASSES:
        raise DataFormatError(f"model file {path} has unknown kind {kind!r}")
    hp = _dataclass_from_dict(ModelHyperparams, doc["hyperparams"])
    hp.validate()
    cls = PARAM_CLASSES[kind]
    kwargs = {}
    for f in dataclasses.fields(cls):
        entry = doc["params"].get(f.name)
        if entry is None:
            raise DataFormatError(f"model file {path} is missing tensor {f.name!r}")
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        kwargs[f.name] = arr
    params = cls(**kwargs)
    check_finite(params)
    return kind, hp, params
