import math

import numpy as np
import pytest

from cpsnn import ConfigError, ModelHyperparams
from cpsnn.baselines import (adaptive_batch_forward, adaptive_snn_forward,
                             fixed_batch_forward, fixed_snn_forward)
from cpsnn.params import init_adaptive_params, init_fixed_params


def reference_fixed(s, w_in, alpha_m, theta):
    """Independent per-step LIF oracle."""
    T, C = s.shape
    H = w_in.shape[0]
    v = np.zeros(H)
    pre_all, spk_all = [], []
    for t in range(T):
        cur = w_in @ s[t]
        pre = alpha_m * v + (1 - alpha_m) * cur
        spk = (pre > theta).astype(float)
        v = (1 - spk) * pre
        pre_all.append(pre)
        spk_all.append(spk)
    return np.array(pre_all), np.array(spk_all)


class TestFixedSNN:
    def test_matches_reference_loop(self):
        hp = ModelHyperparams(channels=3, hidden=5)
        rng = np.random.default_rng(0)
        params = init_fixed_params(hp, rng)
        params.w_in *= 4.0  # make sure some spikes happen
        s = (rng.random((30, 3)) < 0.3).astype(float)
        rates, logits, tape = fixed_snn_forward(s, params, hp)
        pre_ref, spk_ref = reference_fixed(s, params.w_in, hp.alpha_m, hp.theta)
        assert np.allclose(tape.pre_v[:, 0], pre_ref, atol=1e-14)
        assert np.array_equal(tape.spikes[:, 0], spk_ref)
        assert spk_ref.sum() > 0
        assert np.allclose(rates, spk_ref.mean(axis=0))

    def test_current_is_instantaneous_only(self):
        # a single early spike leaves no synaptic footprint afterwards:
        # the membrane just decays geometrically
        hp = ModelHyperparams(channels=2, hidden=2)
        params = init_fixed_params(hp, np.random.default_rng(1))
        s = np.zeros((10, 2))
        s[0, 0] = 1.0
        _, _, tape = fixed_snn_forward(s, params, hp)
        pre = tape.pre_v[:, 0]
        for t in range(1, 10):
            assert np.allclose(pre[t], hp.alpha_m * pre[t - 1])

    def test_rejects_channel_mismatch(self):
        hp = ModelHyperparams(channels=3, hidden=4)
        params = init_fixed_params(hp, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            fixed_batch_forward(np.zeros((1, 5, 2)), params, hp)


class TestAdaptiveSNN:
    def test_init_reduces_to_fixed(self):
        # zero decay-controller weights and a logit(alpha_m) bias make the
        # adaptive membrane identical to the fixed one
        hp = ModelHyperparams(channels=3, hidden=4)
        rng = np.random.default_rng(2)
        fixed = init_fixed_params(hp, np.random.default_rng(5))
        adaptive = init_adaptive_params(hp, np.random.default_rng(5))
        assert np.array_equal(fixed.w_in, adaptive.w_in)
        s = (rng.random((25, 3)) < 0.4).astype(float)
        _, _, t_fixed = fixed_snn_forward(s, fixed, hp)
        _, _, t_adapt = adaptive_snn_forward(s, adaptive, hp)
        assert np.allclose(t_adapt.decay, hp.alpha_m, atol=1e-12)
        assert np.allclose(t_adapt.pre_v, t_fixed.pre_v, atol=1e-12)
        assert np.array_equal(t_adapt.spikes, t_fixed.spikes)

    def test_input_conditioned_decay_varies(self):
        hp = ModelHyperparams(channels=3, hidden=4)
        params = init_adaptive_params(hp, np.random.default_rng(3))
        params.u_decay[:] = np.random.default_rng(4).normal(size=(4, 3))
        s = np.zeros((4, 3))
        s[1] = 1.0
        _, _, tape = adaptive_snn_forward(s, params, hp)
        assert not np.allclose(tape.decay[1], tape.decay[0])
        assert np.allclose(tape.decay[0], hp.alpha_m)  # zero input -> bias only

    def test_unscaled_input_mode(self):
        hp = ModelHyperparams(channels=2, hidden=2, unscaled_input=True)
        params = init_adaptive_params(hp, np.random.default_rng(0))
        s = np.zeros((3, 2))
        s[0, 0] = 1.0
        _, _, tape = adaptive_snn_forward(s, params, hp)
        cur0 = params.w_in @ s[0]
        # without the (1 - decay) scaling the first membrane equals the
        # raw current (initial state is zero)
        assert np.allclose(tape.pre_v[0, 0], cur0)
        hp2 = ModelHyperparams(channels=2, hidden=2)
        _, _, tape2 = adaptive_snn_forward(s, params, hp2)
        assert np.allclose(tape2.pre_v[0, 0], (1 - hp2.alpha_m) * cur0)

    def test_tape_shapes(self):
        hp = ModelHyperparams(channels=3, hidden=4)
        params = init_adaptive_params(hp, np.random.default_rng(0))
        _, _, tape = adaptive_batch_forward(np.zeros((2, 7, 3)), params, hp)
        assert tape.post_v.shape == (8, 2, 4)
        assert tape.decay.shape == (7, 2, 4)
        assert tape.T == 7
