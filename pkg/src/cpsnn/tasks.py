"""Long-gap temporal XOR benchmark: generation, serialization, diagnostics.

Each sequence carries exactly two cue spikes on channels ``a`` and ``b``,
separated by a gap drawn uniformly from a configured range, surrounded by
i.i.d. Bernoulli distractor spikes. The label is the XOR of the cue channel
parities, so solving the task requires bridging the gap between the cues.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import TaskConfig
from .errors import ConfigError, DataFormatError

# fixed sub-stream tags so dataset, init, and shuffle draws never collide
STREAM_DATA = 0x5EED_DA7A


@dataclass
class CueMeta:
    t1: int
    t2: int
    a: int
    b: int
    gap: int


@dataclass
class SpikeSequence:
    """A labeled binary spike raster of shape (T, C)."""

    spikes: np.ndarray  # (T, C) uint8, entries in {0, 1}
    label: int
    meta: Optional[CueMeta] = None

    @property
    def T(self) -> int:
        return self.spikes.shape[0]

    @property
    def C(self) -> int:
        return self.spikes.shape[1]


def generate_sample(cfg: TaskConfig, rng: np.random.Generator) -> SpikeSequence:
    """Draw one sequence: gap, cue placement, cue channels, then distractors.

    Distractors are i.i.d. per cell; a distractor landing on a cue cell is
    absorbed (the cue spike stands).
    """
    cfg.validate()
    T, C = cfg.horizon, cfg.channels
    gap = int(rng.integers(cfg.gap_min, cfg.gap_max + 1))
    t1 = int(rng.integers(0, T - gap))
    t2 = t1 + gap
    a = int(rng.integers(0, C))
    b = int(rng.integers(0, C))
    spikes = (rng.random((T, C)) < cfg.distractor_rate).astype(np.uint8)
    spikes[t1, a] = 1
    spikes[t2, b] = 1
    label = (a % 2) ^ (b % 2)
    return SpikeSequence(spikes=spikes, label=label,
                         meta=CueMeta(t1=t1, t2=t2, a=a, b=b, gap=gap))


def generate_dataset(cfg: TaskConfig) -> list[SpikeSequence]:
    """Deterministic dataset; sample i uses its own (seed, i)-keyed stream."""
    cfg.validate()
    return [
        generate_sample(cfg, np.random.default_rng([STREAM_DATA, cfg.seed, i]))
        for i in range(cfg.n_samples)
    ]


def _sequence_to_obj(seq: SpikeSequence) -> dict:
    ts, cs = np.nonzero(seq.spikes)
    obj = {
        "T": seq.T,
        "C": seq.C,
        "events": [[int(t), int(c)] for t, c in zip(ts, cs)],
        "label": int(seq.label),
    }
    if seq.meta is not None:
        m = seq.meta
        obj["meta"] = {"t1": m.t1, "t2": m.t2, "a": m.a, "b": m.b, "gap": m.gap}
    return obj


def _sequence_from_obj(obj: dict, lineno: int) -> SpikeSequence:
    try:
        T, C = int(obj["T"]), int(obj["C"])
        spikes = np.zeros((T, C), dtype=np.uint8)
        for t, c in obj["events"]:
            spikes[t, c] = 1
        meta = None
        if "meta" in obj:
            m = obj["meta"]
            meta = CueMeta(t1=int(m["t1"]), t2=int(m["t2"]),
                           a=int(m["a"]), b=int(m["b"]), gap=int(m["gap"]))
        return SpikeSequence(spikes=spikes, label=int(obj["label"]), meta=meta)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DataFormatError(f"malformed record at line {lineno}: {exc}") from exc


def save_dataset(dataset: list[SpikeSequence], path) -> None:
    with open(path, "w") as fh:
        for seq in dataset:
            fh.write(json.dumps(_sequence_to_obj(seq), sort_keys=True))
            fh.write("\n")


def load_dataset(path) -> list[SpikeSequence]:
    dataset = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(
                    f"malformed record at line {lineno}: {exc}"
                ) from exc
            dataset.append(_sequence_from_obj(obj, lineno))
    return dataset


def dataset_arrays(dataset: list[SpikeSequence]):
    """Stack a dataset into float64 (N, T, C) spikes and int64 labels."""
    if not dataset:
        raise ConfigError("dataset is empty")
    T, C = dataset[0].T, dataset[0].C
    for i, seq in enumerate(dataset):
        if seq.T != T or seq.C != C:
            raise ConfigError(
                f"sequence {i} has shape ({seq.T},{seq.C}), expected ({T},{C})"
            )
    spikes = np.stack([seq.spikes.astype(np.float64) for seq in dataset])
    labels = np.array([seq.label for seq in dataset], dtype=np.int64)
    return spikes, labels


def cue_posterior(seq: SpikeSequence, cfg: TaskConfig) -> float:
    """Exact posterior probability of label 1 under the generative model.

    Every ordered pair of observed spikes whose lag falls in the configured
    range is a cue candidate; because distractors are i.i.d. and cell-wise
    indistinguishable from cues, all candidates share the same likelihood and
    the posterior reduces to a prior-weighted vote over candidate parities.
    """
    ts, cs = np.nonzero(seq.spikes)
    num = 0.0
    den = 0.0
    T = cfg.horizon
    p_gap = 1.0 / (cfg.gap_max - cfg.gap_min + 1)
    for i in range(len(ts)):
        for j in range(len(ts)):
            d = int(ts[j]) - int(ts[i])
            if cfg.gap_min <= d <= cfg.gap_max:
                w = p_gap / (T - d)
                den += w
                if (int(cs[i]) % 2) ^ (int(cs[j]) % 2):
                    num += w
    return num / den if den > 0 else 0.5


def accuracy_ceiling(cfg: TaskConfig, n_samples: int = 500,
                     seed: int = 0) -> float:
    """Monte-Carlo estimate of the best achievable accuracy on this task.

    Uses the exact cue posterior as the decision rule; no model can beat this
    ceiling in expectation. With heavy distractor rates the ceiling collapses
    toward chance because cue candidates drown in equally likely impostors.
    """
    correct = 0
    for i in range(n_samples):
        rng = np.random.default_rng([STREAM_DATA + 1, seed, i])
        seq = generate_sample(cfg, rng)
        pred = 1 if cue_posterior(seq, cfg) > 0.5 else 0
        correct += int(pred == seq.label)
    return correct / n_samples
