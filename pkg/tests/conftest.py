import numpy as np
import pytest

from cpsnn import ModelHyperparams
from cpsnn.params import INITIALIZERS, param_items

GRADCHECK_STREAM = 0xF00D


def random_gradcheck_instance(i):
    """A small random (kind, hp, params, inputs, labels) gradcheck instance.

    Sized C<=4, H<=4, T<=20 with decay rates chosen away from 1 so every
    pathway (including the warp controller) carries a measurable gradient.
    """
    rng = np.random.default_rng([GRADCHECK_STREAM, i])
    C = int(rng.integers(2, 5))
    H = int(rng.integers(2, 5))
    T = int(rng.integers(8, 21))
    hp = ModelHyperparams(
        channels=C, hidden=H,
        alpha_f=float(rng.uniform(0.3, 0.6)),
        alpha_s=float(rng.uniform(0.8, 0.95)),
        lambda_f=float(rng.uniform(0.3, 1.0)),
        lambda_s=float(rng.uniform(0.5, 1.5)),
    )
    kind = ("cpsnn", "snn_fixed", "snn_adaptive")[i % 3]
    params = INITIALIZERS[kind](hp, rng)
    for _, arr in param_items(params):
        arr += rng.normal(0, 0.5, size=arr.shape)
    if kind == "cpsnn":
        params.b_ctrl[:] = rng.normal(0, 1.0, size=C)
    s = (rng.random((2, T, C)) < 0.3).astype(np.float64)
    labels = rng.integers(0, 2, size=2)
    return kind, hp, params, s, labels


def max_param_rel_error(grads, reference):
    """Per-tensor relative error max ||a-b|| / max(||a||, ||b||, 1e-8)."""
    worst = 0.0
    for name, g in param_items(grads):
        r = getattr(reference, name)
        denom = max(float(np.linalg.norm(g)), float(np.linalg.norm(r)), 1e-8)
        worst = max(worst, float(np.linalg.norm(g - r)) / denom)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)
