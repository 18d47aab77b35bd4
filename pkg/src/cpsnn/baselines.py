"""Comparison models sharing the readout, loss, optimizer, and task pipeline.

Two baselines: a plain fixed-decay LIF layer whose only memory is the
membrane leak, and a variant whose per-neuron membrane decay is produced by
a sigmoid controller conditioned on the current input spikes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import ModelHyperparams
from .dynamics import _require_finite, readout
from .errors import ConfigError
from .params import AdaptiveSNNParams, FixedSNNParams
from .tasks import SpikeSequence


@dataclass
class FixedTape:
    inputs: np.ndarray   # (T, B, C)
    pre_v: np.ndarray    # (T, B, H)
    spikes: np.ndarray   # (T, B, H)
    rates: np.ndarray
    logits: np.ndarray
    soft: bool

    @property
    def T(self):
        return self.inputs.shape[0]


@dataclass
class AdaptiveTape:
    inputs: np.ndarray   # (T, B, C)
    post_v: np.ndarray   # (T+1, B, H) membrane after reset, incl. initial
    decay: np.ndarray    # (T, B, H) per-neuron membrane decay
    pre_v: np.ndarray    # (T, B, H)
    spikes: np.ndarray   # (T, B, H)
    rates: np.ndarray
    logits: np.ndarray
    soft: bool

    @property
    def T(self):
        return self.inputs.shape[0]


def _as_time_major(s_batch, hp):
    s_batch = np.asarray(s_batch, dtype=np.float64)
    if s_batch.ndim != 3:
        raise ConfigError("expected a (B, T, C) spike array")
    B, T, C = s_batch.shape
    if T == 0:
        raise ConfigError("empty sequence")
    if C != hp.channels:
        raise ConfigError(f"sequence has {C} channels, model expects {hp.channels}")
    _require_finite("spikes", s_batch)
    return np.ascontiguousarray(s_batch.transpose(1, 0, 2)), B


def fixed_batch_forward(s_batch, params: FixedSNNParams, hp: ModelHyperparams,
                        soft: bool = False):
    s_seq, B = _as_time_major(s_batch, hp)
    w_in_t = np.ascontiguousarray(params.w_in.T)
    v0 = np.zeros((B, hp.hidden))
    pre_rec, spk_rec, rates = kernels.fixed_forward(
        s_seq, v0, w_in_t, hp.alpha_m, hp.theta, hp.surrogate_width, soft)
    logits = readout(rates, params)
    tape = FixedTape(inputs=s_seq, pre_v=pre_rec, spikes=spk_rec,
                     rates=rates, logits=logits, soft=soft)
    return rates, logits, tape


def adaptive_batch_forward(s_batch, params: AdaptiveSNNParams,
                           hp: ModelHyperparams, soft: bool = False):
    s_seq, B = _as_time_major(s_batch, hp)
    w_in_t = np.ascontiguousarray(params.w_in.T)
    u_t = np.ascontiguousarray(params.u_decay.T)
    v0 = np.zeros((B, hp.hidden))
    v_rec, al_rec, pre_rec, spk_rec, rates = kernels.adaptive_forward(
        s_seq, v0, w_in_t, u_t, params.a_decay, hp.theta,
        hp.surrogate_width, soft, hp.unscaled_input)
    logits = readout(rates, params)
    tape = AdaptiveTape(inputs=s_seq, post_v=v_rec, decay=al_rec,
                        pre_v=pre_rec, spikes=spk_rec, rates=rates,
                        logits=logits, soft=soft)
    return rates, logits, tape


def fixed_snn_forward(seq, params: FixedSNNParams, hp: ModelHyperparams,
                      record_tape: bool = True, soft: bool = False):
    raster = seq.spikes if isinstance(seq, SpikeSequence) else np.asarray(seq)
    rates, logits, tape = fixed_batch_forward(raster[None], params, hp, soft=soft)
    return rates[0], logits[0], (tape if record_tape else None)


def adaptive_snn_forward(seq, params: AdaptiveSNNParams, hp: ModelHyperparams,
                         record_tape: bool = True, soft: bool = False):
    raster = seq.spikes if isinstance(seq, SpikeSequence) else np.asarray(seq)
    rates, logits, tape = adaptive_batch_forward(raster[None], params, hp,
                                                 soft=soft)
    return rates[0], logits[0], (tape if record_tape else None)


def fixed_batch_backward(tape: FixedTape, g_h_base, params: FixedSNNParams,
                         hp: ModelHyperparams):
    """Hidden-layer reverse sweep; returns (w_in gradient, membrane profile)."""
    g_w_in_t, prof_v = kernels.fixed_backward(
        tape.inputs, tape.pre_v, tape.spikes, g_h_base,
        hp.alpha_m, hp.theta, hp.surrogate_width, tape.soft, hp.detach_reset)
    return np.ascontiguousarray(g_w_in_t.T), prof_v


def adaptive_batch_backward(tape: AdaptiveTape, g_h_base,
                            params: AdaptiveSNNParams, hp: ModelHyperparams):
    w_in_t = np.ascontiguousarray(params.w_in.T)
    g_w_in_t, g_u_t, g_a, prof_v = kernels.adaptive_backward(
        tape.inputs, tape.post_v, tape.decay, tape.pre_v, tape.spikes,
        g_h_base, w_in_t, hp.theta, hp.surrogate_width, tape.soft,
        hp.unscaled_input, hp.detach_reset)
    return (np.ascontiguousarray(g_w_in_t.T),
            np.ascontiguousarray(g_u_t.T), g_a, prof_v)
