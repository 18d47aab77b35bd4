"""Forward dynamics of a warped-trace spiking layer.

Per-timestep operations are pure functions over 1-D state vectors; the
full-sequence and batched entry points delegate to the compiled loops in
:mod:`cpsnn.kernels` and record a tape sufficient for exact reverse-mode
replay. Streaming execution composes the same arithmetic one step at a time
with no history retained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .config import ModelHyperparams
from .errors import ConfigError, ContractError, NumericsError
from .params import CPSNNParams
from .tasks import SpikeSequence


def _require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} contains non-finite values")


def fast_trace_update(f_prev, s, alpha_f):
    """One step of the short-timescale presynaptic trace."""
    f_prev = np.asarray(f_prev, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if not 0.0 < alpha_f < 1.0:
        raise ContractError(f"alpha_f must lie in (0,1), got {alpha_f}")
    _require_finite("f_prev", f_prev)
    _require_finite("s", s)
    return alpha_f * f_prev + s


def warp_factor(s, z_prev, w_ctrl, b_ctrl, *, warp_floor=0.0, no_warp=False):
    """Per-channel warp factor from the control network, strictly in (0,1).

    ``w_ctrl`` has shape (C, 2C) and acts on the concatenation of the current
    input spikes and the previous slow trace. Under the no-warp ablation the
    controller is bypassed and the factor is identically 1.
    """
    s = np.asarray(s, dtype=np.float64)
    z_prev = np.asarray(z_prev, dtype=np.float64)
    C = s.shape[-1]
    if no_warp:
        return np.ones(C)
    w_ctrl = np.asarray(w_ctrl, dtype=np.float64)
    b_ctrl = np.asarray(b_ctrl, dtype=np.float64)
    if w_ctrl.shape != (C, 2 * C) or b_ctrl.shape != (C,) or z_prev.shape[-1] != C:
        raise ConfigError(
            f"controller shapes inconsistent: w_ctrl {w_ctrl.shape}, "
            f"b_ctrl {b_ctrl.shape}, C={C}"
        )
    wc_s_t = np.ascontiguousarray(w_ctrl[:, :C].T)
    wc_z_t = np.ascontiguousarray(w_ctrl[:, C:].T)
    u = np.dot(s, wc_s_t) + np.dot(z_prev, wc_z_t) + b_ctrl
    return warp_floor + (1.0 - warp_floor) / (1.0 + np.exp(-u))


def slow_trace_update(z_prev, s, omega, alpha_s):
    """One step of the long-timescale trace with warped decay exponent."""
    z_prev = np.asarray(z_prev, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if not 0.0 < alpha_s < 1.0:
        raise ContractError(f"alpha_s must lie in (0,1), got {alpha_s}")
    if np.any(omega <= 0.0) or np.any(omega > 1.0):
        raise ContractError("warp factors must lie in (0,1]")
    _require_finite("z_prev", z_prev)
    return np.exp(omega * np.log(alpha_s)) * z_prev + s


def synaptic_current(s, f, z, params: CPSNNParams, hp: ModelHyperparams):
    """Three-term drive: instantaneous spikes plus mixed fast/slow traces."""
    s = np.asarray(s, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    C = hp.channels
    if s.shape[-1] != C or f.shape[-1] != C or z.shape[-1] != C \
            or params.w_in.shape != (hp.hidden, C):
        raise ConfigError("synaptic_current: shapes inconsistent with hyperparams")
    drive = s.copy()
    if hp.ablation != "no_fast":
        drive = drive + float(params.lam_f) * f
    if hp.ablation != "no_slow":
        drive = drive + float(params.lam_s) * z
    return np.dot(drive, np.ascontiguousarray(params.w_in.T))


def membrane_step(v_prev, current, alpha_m, theta):
    """Leaky integration, strict-threshold spiking, and hard reset."""
    v_prev = np.asarray(v_prev, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if not 0.0 < alpha_m < 1.0:
        raise ContractError(f"alpha_m must lie in (0,1), got {alpha_m}")
    if theta <= 0:
        raise ContractError("theta must be positive")
    _require_finite("current", current)
    pre = alpha_m * v_prev + (1.0 - alpha_m) * current
    spikes = (pre > theta).astype(np.float64)
    return (1.0 - spikes) * pre, spikes


@dataclass
class LayerState:
    """Per-sequence mutable state; owned by exactly one stream of steps."""

    v: np.ndarray  # (H,)
    f: np.ndarray  # (C,)
    z: np.ndarray  # (C,)
    t: int = 0


def init_layer_state(hp: ModelHyperparams) -> LayerState:
    return LayerState(v=np.zeros(hp.hidden), f=np.zeros(hp.channels),
                      z=np.zeros(hp.channels))


def state_bytes(hp: ModelHyperparams) -> dict:
    """Analytic live-state footprint of one streaming evaluation."""
    neuron = hp.hidden * 8
    trace = 2 * hp.channels * 8
    return {"neuron_state_bytes": neuron, "trace_state_bytes": trace,
            "total_state_bytes": neuron + trace}


@dataclass
class Tape:
    """Per-timestep forward records for exact reverse-mode replay.

    All arrays carry a batch axis; single-sequence calls use B=1. ``slow``
    has T+1 entries so the trace entering every step is available.
    """

    inputs: np.ndarray    # (T, B, C)
    fast: np.ndarray      # (T, B, C)
    slow: np.ndarray      # (T+1, B, C)
    warp: np.ndarray      # (T, B, C)
    current: np.ndarray   # (T, B, H)
    pre_v: np.ndarray     # (T, B, H) membrane before reset
    spikes: np.ndarray    # (T, B, H)
    rates: np.ndarray     # (B, H)
    logits: np.ndarray    # (B, classes)
    soft: bool

    @property
    def post_v(self):
        return (1.0 - self.spikes) * self.pre_v

    @property
    def T(self):
        return self.inputs.shape[0]


def _ablation_flags(hp: ModelHyperparams):
    return (hp.ablation == "no_warp",
            hp.ablation != "no_fast",
            hp.ablation != "no_slow")


def cpsnn_transposed_weights(params: CPSNNParams):
    C = params.b_ctrl.shape[0]
    return (np.ascontiguousarray(params.w_in.T),
            np.ascontiguousarray(params.w_ctrl[:, :C].T),
            np.ascontiguousarray(params.w_ctrl[:, C:].T))


def readout(rates, params):
    return np.dot(rates, params.w_out.T) + params.b_out


def batch_forward(s_batch, params: CPSNNParams, hp: ModelHyperparams,
                  soft: bool = False):
    """Forward a (B, T, C) spike batch; returns (rates, logits, tape)."""
    s_batch = np.asarray(s_batch, dtype=np.float64)
    if s_batch.ndim != 3:
        raise ConfigError("expected a (B, T, C) spike array")
    B, T, C = s_batch.shape
    if T == 0:
        raise ConfigError("empty sequence")
    if C != hp.channels:
        raise ConfigError(f"sequence has {C} channels, model expects {hp.channels}")
    _require_finite("spikes", s_batch)

    s_seq = np.ascontiguousarray(s_batch.transpose(1, 0, 2))
    w_in_t, wc_s_t, wc_z_t = cpsnn_transposed_weights(params)
    no_warp, use_fast, use_slow = _ablation_flags(hp)
    v0 = np.zeros((B, hp.hidden))
    fz0 = np.zeros((B, C))
    f_rec, z_rec, w_rec, cur_rec, pre_rec, spk_rec, rates = kernels.cpsnn_forward(
        s_seq, v0, fz0, fz0, w_in_t, wc_s_t, wc_z_t, params.b_ctrl,
        float(params.lam_f), float(params.lam_s),
        hp.alpha_m, hp.alpha_f, hp.alpha_s, hp.theta, hp.surrogate_width,
        hp.warp_floor, no_warp, use_fast, use_slow, soft)
    logits = readout(rates, params)
    tape = Tape(inputs=s_seq, fast=f_rec, slow=z_rec, warp=w_rec,
                current=cur_rec, pre_v=pre_rec, spikes=spk_rec,
                rates=rates, logits=logits, soft=soft)
    return rates, logits, tape


def forward_sequence(seq, params: CPSNNParams, hp: ModelHyperparams,
                     record_tape: bool = True, soft: bool = False):
    """Run one sequence through the layer and readout.

    ``seq`` is a :class:`SpikeSequence` or a (T, C) array. Returns the
    time-averaged hidden spike rates, the readout logits, and (when
    requested) the tape.
    """
    if isinstance(seq, SpikeSequence):
        raster = seq.spikes
    else:
        raster = np.asarray(seq)
    if raster.ndim != 2:
        raise ConfigError("expected a (T, C) spike raster")
    rates, logits, tape = batch_forward(raster[None, :, :], params, hp, soft=soft)
    return rates[0], logits[0], (tape if record_tape else None)


def streaming_step(state: LayerState, s, params: CPSNNParams,
                   hp: ModelHyperparams):
    """Advance the layer by one timestep in place; no history is kept.

    Produces hidden spikes bit-identical to :func:`forward_sequence` at the
    same step index.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (hp.channels,) or state.v.shape != (hp.hidden,):
        raise ConfigError("streaming_step: state/input dimensions mismatch")
    no_warp, use_fast, use_slow = _ablation_flags(hp)
    state.f = hp.alpha_f * state.f + s
    omega = warp_factor(s, state.z, params.w_ctrl, params.b_ctrl,
                        warp_floor=hp.warp_floor, no_warp=no_warp)
    state.z = np.exp(omega * np.log(hp.alpha_s)) * state.z + s
    drive = s.copy()
    if use_fast:
        drive = drive + float(params.lam_f) * state.f
    if use_slow:
        drive = drive + float(params.lam_s) * state.z
    cur = np.dot(drive, np.ascontiguousarray(params.w_in.T))
    pre = hp.alpha_m * state.v + (1.0 - hp.alpha_m) * cur
    spikes = (pre > hp.theta).astype(np.float64)
    state.v = (1.0 - spikes) * pre
    state.t += 1
    return spikes


def run_stream(hp: ModelHyperparams, params: CPSNNParams, n_steps: int,
               input_buffer, state: Optional[LayerState] = None):
    """Constant-memory streaming run cycling over ``input_buffer`` rows.

    Used by the scaling probes; returns (state, total hidden spike count).
    """
    if state is None:
        state = init_layer_state(hp)
    buf = np.ascontiguousarray(np.asarray(input_buffer, dtype=np.float64))
    w_in_t, wc_s_t, wc_z_t = cpsnn_transposed_weights(params)
    no_warp, use_fast, use_slow = _ablation_flags(hp)
    count = kernels.cpsnn_stream(
        n_steps, buf, state.v, state.f, state.z, w_in_t, wc_s_t, wc_z_t,
        params.b_ctrl, float(params.lam_f), float(params.lam_s),
        hp.alpha_m, hp.alpha_f, hp.alpha_s, hp.theta, hp.surrogate_width,
        hp.warp_floor, no_warp, use_fast, use_slow)
    state.t += n_steps
    return state, count
