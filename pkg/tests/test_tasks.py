import dataclasses

import numpy as np
import pytest

from cpsnn import ConfigError, DataFormatError, TaskConfig
from cpsnn.tasks import (accuracy_ceiling, cue_posterior, dataset_arrays,
                         generate_dataset, generate_sample, load_dataset,
                         save_dataset)


def small_cfg(**kw):
    base = dict(channels=6, horizon=40, gap_min=5, gap_max=15,
                distractor_rate=0.02, n_samples=50, seed=7)
    base.update(kw)
    return TaskConfig(**base)


class TestGeneration:
    def test_sample_structure(self):
        cfg = small_cfg()
        for i in range(30):
            seq = generate_sample(cfg, np.random.default_rng(i))
            m = seq.meta
            assert seq.spikes.shape == (40, 6)
            assert set(np.unique(seq.spikes)) <= {0, 1}
            assert cfg.gap_min <= m.gap <= cfg.gap_max
            assert m.t2 == m.t1 + m.gap and m.t2 < cfg.horizon
            assert seq.spikes[m.t1, m.a] == 1 and seq.spikes[m.t2, m.b] == 1
            assert seq.label == ((m.a % 2) ^ (m.b % 2))

    def test_no_distractors_exactly_two_spikes(self):
        cfg = small_cfg(distractor_rate=0.0)
        for i in range(20):
            seq = generate_sample(cfg, np.random.default_rng(i))
            assert seq.spikes.sum() == 2

    def test_dataset_deterministic(self):
        cfg = small_cfg()
        d1 = generate_dataset(cfg)
        d2 = generate_dataset(cfg)
        assert all(np.array_equal(a.spikes, b.spikes) and a.label == b.label
                   for a, b in zip(d1, d2))

    def test_seed_changes_dataset(self):
        d1 = generate_dataset(small_cfg(seed=1))
        d2 = generate_dataset(small_cfg(seed=2))
        assert any(not np.array_equal(a.spikes, b.spikes)
                   for a, b in zip(d1, d2))

    def test_label_balance_roughly_even(self):
        labels = [s.label for s in generate_dataset(small_cfg(n_samples=400))]
        assert 0.35 < np.mean(labels) < 0.65

    def test_invalid_gap_range(self):
        with pytest.raises(ConfigError):
            small_cfg(gap_max=40).validate()  # gap_max must be < horizon


class TestSerialization:
    def test_jsonl_round_trip(self, tmp_path):
        cfg = small_cfg()
        dataset = generate_dataset(cfg)
        path = tmp_path / "data.jsonl"
        save_dataset(dataset, path)
        loaded = load_dataset(path)
        assert len(loaded) == len(dataset)
        for a, b in zip(dataset, loaded):
            assert np.array_equal(a.spikes, b.spikes)
            assert a.label == b.label
            assert a.meta == b.meta

    def test_save_is_byte_deterministic(self, tmp_path):
        dataset = generate_dataset(small_cfg())
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(dataset, p1)
        save_dataset(dataset, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        dataset = generate_dataset(small_cfg(n_samples=3))
        save_dataset(dataset, path)
        lines = path.read_text().splitlines()
        lines[1] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_dataset(path)

    def test_missing_field_reports_lineno(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"T": 4, "C": 2, "events": []}\n')
        with pytest.raises(DataFormatError, match="line 1"):
            load_dataset(path)

    def test_blank_lines_skipped(self, tmp_path):
        dataset = generate_dataset(small_cfg(n_samples=2))
        path = tmp_path / "gaps.jsonl"
        save_dataset(dataset, path)
        path.write_text(path.read_text().replace("\n", "\n\n"))
        assert len(load_dataset(path)) == 2


class TestArraysAndCeiling:
    def test_dataset_arrays_shapes(self):
        cfg = small_cfg(n_samples=10)
        spikes, labels = dataset_arrays(generate_dataset(cfg))
        assert spikes.shape == (10, 40, 6) and spikes.dtype == np.float64
        assert labels.shape == (10,) and labels.dtype == np.int64

    def test_dataset_arrays_rejects_ragged(self):
        d = generate_dataset(small_cfg(n_samples=2))
        d[1].spikes = d[1].spikes[:-1]
        with pytest.raises(ConfigError):
            dataset_arrays(d)

    def test_posterior_exact_without_distractors(self):
        cfg = small_cfg(distractor_rate=0.0)
        for i in range(20):
            seq = generate_sample(cfg, np.random.default_rng(i))
            post = cue_posterior(seq, cfg)
            assert post == pytest.approx(float(seq.label))

    def test_ceiling_perfect_without_distractors(self):
        cfg = small_cfg(distractor_rate=0.0)
        assert accuracy_ceiling(cfg, n_samples=100) == 1.0

    def test_ceiling_collapses_with_heavy_distractors(self):
        clean = small_cfg(distractor_rate=0.0)
        noisy = small_cfg(distractor_rate=0.05)
        assert accuracy_ceiling(noisy, n_samples=200) < accuracy_ceiling(
            clean, n_samples=200)
