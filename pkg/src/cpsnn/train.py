"""Training: surrogate gradients, exact BPTT, Adam, and the epoch loop.

The reverse sweeps replay the recorded tapes exactly, substituting a bounded
triangular surrogate for the spike indicator (hard mode) or the sigmoid
derivative (soft mode, used for finite-difference verification, where the
forward pass itself is smoothed).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .baselines import (AdaptiveTape, FixedTape, adaptive_batch_backward,
                        adaptive_batch_forward, fixed_batch_backward,
                        fixed_batch_forward)
from .config import ModelHyperparams, TrainingConfig
from .dynamics import Tape, batch_forward, cpsnn_transposed_weights
from .errors import ConfigError, NumericsError
from .params import (AdaptiveSNNParams, CPSNNParams, FixedSNNParams,
                     INITIALIZERS, param_items, zeros_like_params)
from .tasks import dataset_arrays

STREAM_INIT = 0x5EED_0111
STREAM_SHUFFLE = 0x5EED_0222


def surrogate_derivative(v, theta, width):
    """Triangular stand-in for the spike indicator derivative.

    Peaks at 1/width on the threshold, hits zero at distance ``width``, and
    integrates to 1 over its support.
    """
    if width <= 0:
        raise ConfigError("surrogate width must be positive")
    v = np.asarray(v, dtype=np.float64)
    return np.maximum(0.0, 1.0 - np.abs(v - theta) / width) / width


def softmax_cross_entropy(logits, labels):
    """Per-sample cross entropy and softmax probabilities."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    idx = np.arange(len(labels))
    losses = -np.log(probs[idx, labels])
    return losses, probs


def forward_batch(model_kind, s_batch, params, hp, soft=False):
    if model_kind == "cpsnn":
        return batch_forward(s_batch, params, hp, soft=soft)
    if model_kind == "snn_fixed":
        return fixed_batch_forward(s_batch, params, hp, soft=soft)
    if model_kind == "snn_adaptive":
        return adaptive_batch_forward(s_batch, params, hp, soft=soft)
    raise ConfigError(f"unknown model kind {model_kind!r}")


def _readout_backward(tape, labels, params):
    """Shared head: loss, readout gradients, per-step hidden spike adjoint."""
    B = tape.rates.shape[0]
    losses, probs = softmax_cross_entropy(tape.logits, labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(B), np.asarray(labels, dtype=np.int64)] = 1.0
    g_logits = (probs - onehot) / B
    g_w_out = np.dot(g_logits.T, tape.rates)
    g_b_out = g_logits.sum(axis=0)
    g_rates = np.dot(g_logits, params.w_out)
    g_h_base = g_rates / tape.T
    return float(losses.mean()), g_w_out, g_b_out, g_h_base


def _first_bad_timestep(tape):
    for t in range(tape.T):
        if not (np.all(np.isfinite(tape.pre_v[t]))
                and np.all(np.isfinite(tape.spikes[t]))):
            return t
    return None


def _check_grads_finite(grads, tape):
    for name, arr in param_items(grads):
        if not np.all(np.isfinite(arr)):
            t = _first_bad_timestep(tape)
            raise NumericsError(
                f"non-finite gradient in {name}"
                + (f" (first corrupt timestep: {t})" if t is not None else "")
            )


def backward_batch(model_kind, tape, labels, params, hp):
    """Exact reverse-mode gradients averaged over the batch.

    Returns (mean loss, gradients, per-step state-adjoint L2 profile). The
    profile entry at index t is the sensitivity of the loss to the hidden
    state entering step t.
    """
    loss, g_w_out, g_b_out, g_h_base = _readout_backward(tape, labels, params)
    if model_kind == "cpsnn":
        no_warp = hp.ablation == "no_warp"
        use_fast = hp.ablation != "no_fast"
        use_slow = hp.ablation != "no_slow"
        C = hp.channels
        wc_z = np.ascontiguousarray(params.w_ctrl[:, C:])
        (g_w_in_t, g_wc_s_t, g_wc_z_t, g_b_c, g_lam_f, g_lam_s,
         prof_v, prof_f, prof_z) = kernels.cpsnn_backward(
            tape.inputs, tape.fast, tape.slow, tape.warp, tape.pre_v,
            tape.spikes, g_h_base, params.w_in, wc_z,
            float(params.lam_f), float(params.lam_s),
            hp.alpha_m, hp.alpha_f, hp.alpha_s, hp.theta,
            hp.surrogate_width, hp.warp_floor, no_warp, use_fast, use_slow,
            tape.soft, hp.detach_reset)
        g_w_ctrl = np.concatenate(
            [np.ascontiguousarray(g_wc_s_t.T), np.ascontiguousarray(g_wc_z_t.T)],
            axis=1)
        grads = CPSNNParams(
            w_in=np.ascontiguousarray(g_w_in_t.T), w_ctrl=g_w_ctrl,
            b_ctrl=g_b_c, w_out=g_w_out, b_out=g_b_out,
            lam_f=np.asarray(g_lam_f), lam_s=np.asarray(g_lam_s))
        profile = np.sqrt(prof_v ** 2 + prof_f ** 2 + prof_z ** 2)
    elif model_kind == "snn_fixed":
        g_w_in, prof_v = fixed_batch_backward(tape, g_h_base, params, hp)
        grads = FixedSNNParams(w_in=g_w_in, w_out=g_w_out, b_out=g_b_out)
        profile = prof_v
    elif model_kind == "snn_adaptive":
        g_w_in, g_u, g_a, prof_v = adaptive_batch_backward(
            tape, g_h_base, params, hp)
        grads = AdaptiveSNNParams(w_in=g_w_in, u_decay=g_u, a_decay=g_a,
                                  w_out=g_w_out, b_out=g_b_out)
        profile = prof_v
    else:
        raise ConfigError(f"unknown model kind {model_kind!r}")
    _check_grads_finite(grads, tape)
    return loss, grads, profile


def backward_sequence(tape, label, params, hp):
    """Single-sequence loss and gradients (tape recorded with B=1)."""
    if isinstance(tape, Tape):
        kind = "cpsnn"
    elif isinstance(tape, FixedTape):
        kind = "snn_fixed"
    elif isinstance(tape, AdaptiveTape):
        kind = "snn_adaptive"
    else:
        raise ConfigError(f"unrecognized tape type {type(tape).__name__}")
    loss, grads, _ = backward_batch(kind, tape, [label], params, hp)
    return loss, grads


def batch_loss(model_kind, s_batch, labels, params, hp, soft=False):
    """Mean cross entropy of one forward pass (finite-difference target)."""
    _, logits, _ = forward_batch(model_kind, s_batch, params, hp, soft=soft)
    losses, _ = softmax_cross_entropy(logits, labels)
    return float(losses.mean())


def grad_global_norm(grads) -> float:
    total = 0.0
    for _, arr in param_items(grads):
        total += float(np.sum(arr * arr))
    return float(np.sqrt(total))


def clip_gradients(grads, clip_norm):
    """Uniformly rescale all tensors when the global L2 norm exceeds the cap."""
    if clip_norm <= 0:
        raise ConfigError("clip_norm must be positive")
    norm = grad_global_norm(grads)
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    cls = type(grads)
    return cls(**{name: arr * scale for name, arr in param_items(grads)})


def init_adam_state(params):
    return {name: (np.zeros_like(arr), np.zeros_like(arr))
            for name, arr in param_items(params)}


def adam_step(params, grads, opt_state, cfg: TrainingConfig, step: int):
    """Standard Adam with bias correction; mutates params and state in place."""
    if step < 1:
        raise ConfigError("Adam step index starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    lr, eps = cfg.learning_rate, cfg.epsilon
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for name, arr in param_items(params):
        g = getattr(grads, name)
        m, v = opt_state[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, opt_state


def finite_difference_grads(loss_fn, params, eps=1e-6):
    """Central-difference gradient of ``loss_fn(params)`` for every entry.

    Independent of the reverse-mode path: only the forward loss is evaluated.
    """
    grads = zeros_like_params(params)
    for name, arr in param_items(params):
        flat = arr.reshape(-1)
        gflat = getattr(grads, name).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn(params)
            flat[i] = orig - eps
            lo = loss_fn(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
    return grads


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    eval_loss: float
    eval_accuracy: float
    grad_norm: float
    mean_omega: float
    grad_profile: np.ndarray = field(repr=False)


def _batched_indices(n, batch_size):
    for start in range(0, n, batch_size):
        yield np.arange(start, min(start + batch_size, n))


def evaluate(model_kind, params, hp, spikes, labels, batch_size=256):
    """Hard-mode evaluation; returns (mean loss, accuracy, confusion matrix)."""
    n = len(labels)
    loss_sum = 0.0
    confusion = np.zeros((hp.classes, hp.classes), dtype=np.int64)
    for idx in _batched_indices(n, batch_size):
        _, logits, _ = forward_batch(model_kind, spikes[idx], params, hp)
        losses, _ = softmax_cross_entropy(logits, labels[idx])
        loss_sum += float(losses.sum())
        preds = np.argmax(logits, axis=1)
        for y, p in zip(labels[idx], preds):
            confusion[y, p] += 1
    accuracy = float(np.trace(confusion)) / n
    return loss_sum / n, accuracy, confusion


def train_model(train_set, eval_set, model_kind, hp: ModelHyperparams,
                cfg: TrainingConfig):
    """Mini-batch training loop shared by all model kinds.

    Deterministic given ``cfg.seed``: initialization and shuffling use
    dedicated named sub-streams. Returns the trained parameters and the
    per-epoch metrics history.
    """
    hp.validate()
    cfg.validate()
    if model_kind not in INITIALIZERS:
        raise ConfigError(f"unknown model kind {model_kind!r}")
    train_x, train_y = dataset_arrays(train_set) if not isinstance(
        train_set, tuple) else train_set
    eval_x, eval_y = dataset_arrays(eval_set) if not isinstance(
        eval_set, tuple) else eval_set
    if train_x.shape[2] != hp.channels or eval_x.shape[2] != hp.channels:
        raise ConfigError("dataset channel count does not match hyperparams")
    if train_x.shape[1] != eval_x.shape[1]:
        raise ConfigError("train and eval horizons differ")

    rng_init = np.random.default_rng([STREAM_INIT, cfg.seed])
    rng_shuffle = np.random.default_rng([STREAM_SHUFFLE, cfg.seed])
    params = INITIALIZERS[model_kind](hp, rng_init)
    opt_state = init_adam_state(params)
    train_lams = model_kind == "cpsnn" and cfg.train_mixing

    n = len(train_y)
    T = train_x.shape[1]
    history: list[EpochMetrics] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng_shuffle.permutation(n)
        loss_sum = 0.0
        correct = 0
        norm_sum = 0.0
        omega_sum = 0.0
        omega_weight = 0
        profile_sum = np.zeros(T)
        n_batches = 0
        for idx in _batched_indices(n, cfg.batch_size):
            batch = train_x[order[idx]]
            labels = train_y[order[idx]]
            _, logits, tape = forward_batch(model_kind, batch, params, hp)
            loss, grads, profile = backward_batch(model_kind, tape, labels,
                                                  params, hp)
            if model_kind == "cpsnn" and not train_lams:
                grads.lam_f = np.zeros(())
                grads.lam_s = np.zeros(())
            norm_sum += grad_global_norm(grads)
            grads = clip_gradients(grads, cfg.clip_norm)
            step += 1
            adam_step(params, grads, opt_state, cfg, step)

            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == labels))
            if model_kind == "cpsnn":
                omega_sum += float(tape.warp.mean()) * len(idx)
                omega_weight += len(idx)
            profile_sum += profile
            n_batches += 1

        eval_loss, eval_acc, _ = evaluate(model_kind, params, hp,
                                          eval_x, eval_y,
                                          batch_size=cfg.batch_size)
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            eval_loss=eval_loss,
            eval_accuracy=eval_acc,
            grad_norm=norm_sum / n_batches,
            mean_omega=(omega_sum / omega_weight) if omega_weight else float("nan"),
            grad_profile=profile_sum / n_batches,
        ))
    return params, history


def write_metrics_csv(history, path):
    """One row per epoch per split; float fields use repr for byte stability."""
    with open(path, "w") as fh:
        fh.write("epoch,split,loss,accuracy,grad_norm,mean_omega\n")
        for m in history:
            fh.write(f"{m.epoch},train,{m.train_loss!r},{m.train_accuracy!r},"
                     f"{m.grad_norm!r},{m.mean_omega!r}\n")
            fh.write(f"{m.epoch},eval,{m.eval_loss!r},{m.eval_accuracy!r},"
                     f"nan,nan\n")


def write_profile_csv(history, path):
    with open(path, "w") as fh:
        fh.write("epoch,t,grad_magnitude\n")
        for m in history:
            for t, g in enumerate(m.grad_profile):
                fh.write(f"{m.epoch},{t},{float(g)!r}\n")
