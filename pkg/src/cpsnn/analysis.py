"""Kernel analysis, memory-horizon constructions, and complexity probes.

The warped slow trace unrolls into a non-stationary exponential kernel:
each past input contributes with weight kappa[t][k] = alpha_s raised to the
sum of the warp factors between k and t. Everything here is a numerical
consequence of that identity: bounds, non-stationarity witnesses, retention
schedules that hold a target weight beyond any fixed-decay horizon, gradient
flow profiles, and streaming time/space measurements.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import AdaptiveTape, FixedTape
from .config import ModelHyperparams
from .dynamics import Tape, batch_forward, run_stream, state_bytes
from .errors import ConfigError, ContractError, InfeasibleScheduleError
from .params import init_cpsnn_params
from .train import backward_batch

STREAM_PROBE = 0x5EED_9206


@dataclass
class WarpSchedule:
    """A fixed sequence of warp factors, entries in (0, 1]."""

    omega: np.ndarray  # (T,)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if self.omega.ndim != 1 or self.omega.size == 0:
            raise ConfigError("warp schedule must be a nonempty 1-D vector")
        if np.any(self.omega <= 0.0) or np.any(self.omega > 1.0):
            raise ContractError("warp schedule entries must lie in (0,1]")

    @property
    def T(self) -> int:
        return self.omega.shape[0]


@dataclass
class KernelMatrix:
    """Lower-triangular weights kappa[t][k] for k <= t, indices 0..T."""

    kappa: np.ndarray  # (T+1, T+1)
    alpha_s: float


def kernel_matrix(schedule: WarpSchedule, alpha_s: float) -> KernelMatrix:
    """kappa[t][k] = alpha_s^(sum of omega_j for j in k+1..t), in log space."""
    if not 0.0 < alpha_s < 1.0:
        raise ContractError(f"alpha_s must lie in (0,1), got {alpha_s}")
    cum = np.concatenate([[0.0], np.cumsum(schedule.omega)])
    expo = cum[:, None] - cum[None, :]  # expo[t, k] = sum_{j=k+1}^{t} omega_j
    kappa = np.tril(np.exp(math.log(alpha_s) * expo))
    return KernelMatrix(kappa=kappa, alpha_s=alpha_s)


def verify_trace_expansion(s, schedule: WarpSchedule, alpha_s: float) -> float:
    """Max deviation between the trace recurrence and its kernel expansion.

    ``s`` is a single-channel input sequence of length T; step t uses warp
    factor omega[t-1] (1-based trace indexing, z_0 = 0).
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (schedule.T,):
        raise ConfigError("input length must match the schedule length")
    km = kernel_matrix(schedule, alpha_s).kappa
    decay = alpha_s ** schedule.omega
    z = 0.0
    worst = 0.0
    for t in range(schedule.T):
        z = decay[t] * z + s[t]
        closed = float(np.dot(km[t + 1, 1:t + 2], s[:t + 1]))
        worst = max(worst, abs(z - closed))
    return worst


def effective_time(schedule: WarpSchedule, k: int, t: int) -> float:
    """Warped elapsed time between steps k and t: the partial omega sum."""
    if not 0 <= k <= t <= schedule.T:
        raise ContractError(f"need 0 <= k <= t <= T, got k={k}, t={t}")
    return float(np.sum(schedule.omega[k:t]))


@dataclass
class NonstationarityWitness:
    """Two equal-lag index pairs whose kernel weights differ."""

    t1: int
    k1: int
    t2: int
    k2: int
    lag: int
    kappa1: float
    kappa2: float


def check_nonstationarity(schedule: WarpSchedule, alpha_s: float,
                          tol: float = 1e-9) -> Optional[NonstationarityWitness]:
    """Find two equal-lag windows with different kernel weights, if any.

    Returns None exactly when the schedule is constant (to within 1e-12):
    only then does the kernel depend on lag alone. A witness simultaneously
    rules out every fixed decay rate, since no single rate can produce two
    different weights at one lag.
    """
    if schedule.T < 2:
        raise ContractError("need at least two steps to probe stationarity")
    km = kernel_matrix(schedule, alpha_s).kappa
    T = schedule.T
    for lag in range(1, T + 1):
        diag = np.array([km[k + lag, k] for k in range(T + 1 - lag)])
        hi = int(np.argmax(diag))
        lo = int(np.argmin(diag))
        if diag[hi] - diag[lo] > tol:
            return NonstationarityWitness(
                t1=hi + lag, k1=hi, t2=lo + lag, k2=lo, lag=lag,
                kappa1=float(diag[hi]), kappa2=float(diag[lo]))
    return None


@dataclass
class RetentionReport:
    schedule: WarpSchedule
    L: int
    epsilon: float
    omega_bar: float
    fixed_horizon_lag: int   # first lag where the fixed kernel drops below epsilon
    witness_lag: int
    local_max_dev: float     # max |kappa - alpha_s^lag| over lags <= L
    kappa_at_witness: float
    fixed_at_witness: float
    local_ok: bool
    retention_ok: bool


def construct_retention_schedule(alpha_s: float, L: int,
                                 epsilon: float) -> WarpSchedule:
    """A schedule matching fixed decay for L steps yet retaining weight beyond.

    Fixed decay at rate alpha_s falls below epsilon after Lambda =
    ln(epsilon)/ln(alpha_s) steps. When Lambda > L there is slack: run at
    omega = 1 for the first L steps (exact local match), then slow the clock
    to a constant omega_bar < 1 chosen so the total warped time at lag
    2*ceil(Lambda) still stays below Lambda, keeping kappa >= epsilon at a
    lag where the fixed kernel has long since decayed past it.
    """
    if not 0.0 < alpha_s < 1.0:
        raise ContractError(f"alpha_s must lie in (0,1), got {alpha_s}")
    if L < 1 or not 0.0 < epsilon < 1.0:
        raise ConfigError("need L >= 1 and epsilon in (0,1)")
    horizon = math.log(epsilon) / math.log(alpha_s)
    if horizon <= L:
        raise InfeasibleScheduleError(
            f"fixed decay alpha_s={alpha_s} already keeps weight >= {epsilon} "
            f"for {horizon:.2f} >= L={L} steps; no sub-unit warp schedule can "
            "both match it locally and retain more beyond the window"
        )
    witness_lag = 2 * math.ceil(horizon)
    omega_bar = 0.99 * (horizon - L) / (witness_lag - L)
    omega = np.ones(witness_lag)
    omega[L:] = omega_bar
    return WarpSchedule(omega=omega)


def verify_retention_schedule(schedule: WarpSchedule, alpha_s: float, L: int,
                              epsilon: float) -> RetentionReport:
    """Check the two retention guarantees against the actual kernel."""
    km = kernel_matrix(schedule, alpha_s).kappa
    lags = np.arange(1, L + 1)
    local_dev = float(np.max(np.abs(km[lags, 0] - alpha_s ** lags)))
    witness_lag = schedule.T
    kappa_w = float(km[witness_lag, 0])
    fixed_w = float(alpha_s ** witness_lag)
    fixed_horizon_lag = math.ceil(math.log(epsilon) / math.log(alpha_s))
    omega_bar = float(schedule.omega[-1])
    return RetentionReport(
        schedule=schedule, L=L, epsilon=epsilon, omega_bar=omega_bar,
        fixed_horizon_lag=fixed_horizon_lag, witness_lag=witness_lag,
        local_max_dev=local_dev, kappa_at_witness=kappa_w,
        fixed_at_witness=fixed_w,
        local_ok=local_dev <= 1e-6,
        retention_ok=(kappa_w >= epsilon and fixed_w < epsilon))


def retention_report(alpha_s: float, L: int, epsilon: float) -> RetentionReport:
    schedule = construct_retention_schedule(alpha_s, L, epsilon)
    return verify_retention_schedule(schedule, alpha_s, L, epsilon)


def selective_retention_witness(alpha_s: float = 0.995, lag: int = 200):
    """Constructive demonstration that equal lags can carry unequal weights.

    Builds a schedule whose first ``lag`` steps run slowed (omega = 0.1) and
    next ``lag`` steps run at full speed (omega = 1). The two equal-lag
    windows then receive kernel weights alpha_s^(0.1*lag) vs alpha_s^lag;
    any stationary kernel weights them identically. Returns
    (schedule, slow-window weight, fast-window weight, difference).
    """
    omega = np.concatenate([np.full(lag, 0.1), np.ones(lag)])
    schedule = WarpSchedule(omega=omega)
    km = kernel_matrix(schedule, alpha_s).kappa
    w_slow = float(km[lag, 0])
    w_fast = float(km[2 * lag, lag])
    return schedule, w_slow, w_fast, w_slow - w_fast


def gradient_flow_profile(tape, label, params, hp: ModelHyperparams):
    """Per-timestep L2 norm of the loss gradient w.r.t. the entering state."""
    if isinstance(tape, Tape):
        kind = "cpsnn"
    elif isinstance(tape, FixedTape):
        kind = "snn_fixed"
    elif isinstance(tape, AdaptiveTape):
        kind = "snn_adaptive"
    else:
        raise ConfigError(f"unrecognized tape type {type(tape).__name__}")
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    _, _, profile = backward_batch(kind, tape, labels, params, hp)
    return profile


def verify_bounds(tape: Tape, hp: ModelHyperparams, params) -> dict:
    """Check the corrected trace and current bounds on one recorded run.

    The fast trace is geometrically bounded by 1/(1-alpha_f). The slow trace
    admits z_t <= t+1 unconditionally; the geometric bound applies only when
    the warp factor is floored away from zero, in which case the decay rate
    alpha_s^warp_floor is a true contraction. The synaptic current is bounded
    through the max row sum of the input weights.
    """
    f_max = float(np.max(np.abs(tape.fast)))
    f_bound = 1.0 / (1.0 - hp.alpha_f)
    T = tape.T
    steps = np.arange(1, T + 1, dtype=np.float64)
    z_abs = np.abs(tape.slow[1:])  # (T, B, C)
    z_linear_ok = bool(np.all(z_abs.max(axis=(1, 2)) <= steps + 1e-9))
    out = {
        "f_max": f_max,
        "f_bound": f_bound,
        "f_ok": f_max <= f_bound + 1e-9,
        "z_max": float(z_abs.max()),
        "z_linear_ok": z_linear_ok,
    }
    if hp.warp_floor > 0.0:
        z_geo_bound = 1.0 / (1.0 - hp.alpha_s ** hp.warp_floor)
        out["z_geo_bound"] = z_geo_bound
        out["z_geo_ok"] = bool(out["z_max"] <= z_geo_bound + 1e-6)
    w_row = float(np.max(np.abs(params.w_in).sum(axis=1)))
    cur_bound = w_row * (1.0 + float(params.lam_f) / (1.0 - hp.alpha_f)
                         + float(params.lam_s) * out["z_max"])
    out["current_max"] = float(np.max(np.abs(tape.current)))
    out["current_bound"] = cur_bound
    out["current_ok"] = out["current_max"] <= cur_bound + 1e-9
    return out


def scaling_probe(grid, buffer_rows: int = 64, spike_rate: float = 0.05,
                  repeats: int = 3, seed: int = 0):
    """Time and state-memory measurements of streaming inference.

    ``grid`` is an iterable of (T, N, C) triples (N = hidden size). For each
    point, runs ``repeats`` timed streaming passes over a cyclic random input
    buffer and reports the median wall time plus the analytic live-state
    footprint, which by construction does not depend on T. Returns a list of
    row dicts.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("scaling grid is empty")
    rows = []
    for T, N, C in grid:
        hp = ModelHyperparams(channels=C, hidden=N)
        rng = np.random.default_rng([STREAM_PROBE, seed, C, N])
        params = init_cpsnn_params(hp, rng)
        buf = (rng.random((buffer_rows, C)) < spike_rate).astype(np.float64)
        run_stream(hp, params, min(T, 64), buf)  # warm-up (jit compile)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            run_stream(hp, params, T, buf)
            times.append(time.perf_counter() - t0)
        bytes_info = state_bytes(hp)
        rows.append({
            "T": int(T), "N": int(N), "C": int(C),
            "wall_time": float(np.median(times)),
            "neuron_state_bytes": bytes_info["neuron_state_bytes"],
            "trace_state_bytes": bytes_info["trace_state_bytes"],
            "peak_state_bytes": bytes_info["total_state_bytes"],
        })
    return rows


def write_scaling_csv(rows, path):
    cols = ["T", "N", "C", "wall_time", "neuron_state_bytes",
            "trace_state_bytes", "peak_state_bytes"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(
                repr(row[c]) if isinstance(row[c], float) else str(row[c])
                for c in cols) + "\n")


def diagnostics_dump(params, hp: ModelHyperparams, seq, traces_path, warp_path):
    """Per-timestep trace and warp CSVs for one sequence.

    The traces file carries the fast and slow trace of every channel plus a
    fixed-decay reference trace (the same recurrence with warp pinned at 1)
    so the warped decay is directly comparable. The warp file carries the
    per-step mean and per-channel warp factors.
    """
    raster = np.asarray(getattr(seq, "spikes", seq), dtype=np.float64)
    if raster.ndim != 2:
        raise ConfigError("expected a (T, C) spike raster")
    T, C = raster.shape
    _, _, tape = batch_forward(raster[None], params, hp)
    fast = tape.fast[:, 0, :]
    slow = tape.slow[1:, 0, :]
    warp = tape.warp[:, 0, :]
    z_ref = np.zeros((T, C))
    z = np.zeros(C)
    for t in range(T):
        z = hp.alpha_s * z + raster[t]
        z_ref[t] = z

    with open(traces_path, "w") as fh:
        header = (["t"] + [f"f_{c}" for c in range(C)]
                  + [f"z_{c}" for c in range(C)]
                  + [f"z_fixed_{c}" for c in range(C)])
        fh.write(",".join(header) + "\n")
        for t in range(T):
            vals = [str(t)] + [repr(float(x)) for x in fast[t]] \
                + [repr(float(x)) for x in slow[t]] \
                + [repr(float(x)) for x in z_ref[t]]
            fh.write(",".join(vals) + "\n")

    with open(warp_path, "w") as fh:
        header = ["t", "mean_omega"] + [f"omega_{c}" for c in range(C)]
        fh.write(",".join(header) + "\n")
        for t in range(T):
            vals = [str(t), repr(float(warp[t].mean()))] \
                + [repr(float(x)) for x in warp[t]]
            fh.write(",".join(vals) + "\n")
    return {"traces": traces_path, "warp": warp_path}
