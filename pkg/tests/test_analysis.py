import math

import numpy as np
import pytest

from cpsnn import (ConfigError, ContractError, InfeasibleScheduleError,
                   ModelHyperparams)
from cpsnn.analysis import (KernelMatrix, NonstationarityWitness,
                            WarpSchedule, check_nonstationarity,
                            construct_retention_schedule, diagnostics_dump,
                            effective_time, gradient_flow_profile,
                            kernel_matrix, retention_report, scaling_probe,
                            selective_retention_witness, verify_bounds,
                            verify_retention_schedule, verify_trace_expansion,
                            write_scaling_csv)
from cpsnn.dynamics import batch_forward, state_bytes
from cpsnn.params import init_cpsnn_params, init_fixed_params
from cpsnn.train import forward_batch


def random_schedule(T, seed):
    rng = np.random.default_rng(seed)
    return WarpSchedule(omega=rng.uniform(0.05, 1.0, size=T))


class TestKernelMatrix:
    def test_unit_schedule_is_stationary(self):
        km = kernel_matrix(WarpSchedule(omega=np.ones(20)), 0.9)
        for t in range(21):
            for k in range(t + 1):
                assert km.kappa[t, k] == pytest.approx(0.9 ** (t - k), rel=1e-12)

    def test_constant_schedule(self):
        km = kernel_matrix(WarpSchedule(omega=np.full(15, 0.5)), 0.9)
        for t in range(16):
            for k in range(t + 1):
                assert km.kappa[t, k] == pytest.approx(
                    0.9 ** (0.5 * (t - k)), rel=1e-12)

    def test_matches_bruteforce_product(self):
        schedule = random_schedule(50, 0)
        km = kernel_matrix(schedule, 0.995)
        rng = np.random.default_rng(1)
        for _ in range(200):
            t = int(rng.integers(0, 51))
            k = int(rng.integers(0, t + 1))
            prod = 1.0
            for j in range(k, t):
                prod *= 0.995 ** schedule.omega[j]
            assert km.kappa[t, k] == pytest.approx(prod, rel=1e-12)

    def test_unit_diagonal_and_telescoping(self):
        schedule = random_schedule(30, 2)
        km = kernel_matrix(schedule, 0.98)
        assert np.allclose(np.diag(km.kappa), 1.0, atol=1e-12)
        for t in range(2, 31):
            for k in range(t - 1):
                expect = km.kappa[t, k + 1] * 0.98 ** schedule.omega[k]
                assert km.kappa[t, k] == pytest.approx(expect, rel=1e-12)

    def test_bounds(self):
        schedule = random_schedule(100, 3)
        km = kernel_matrix(schedule, 0.995)
        idx = np.tril_indices(101)
        lags = idx[0] - idx[1]
        vals = km.kappa[idx]
        assert np.all(vals >= 0.995 ** lags - 1e-12)
        assert np.all(vals <= 1.0 + 1e-12)
        # strict improvement whenever some omega < 1 in the window
        assert km.kappa[100, 0] > 0.995 ** 100

    def test_rejects_bad_schedule(self):
        with pytest.raises(ContractError):
            WarpSchedule(omega=np.array([0.5, 1.5]))
        with pytest.raises(ContractError):
            kernel_matrix(WarpSchedule(omega=np.ones(3)), 1.0)


class TestTraceExpansion:
    def test_zero_input(self):
        assert verify_trace_expansion(np.zeros(50), random_schedule(50, 0),
                                      0.995) == 0.0

    def test_single_spike_is_kernel_row(self):
        schedule = random_schedule(40, 4)
        km = kernel_matrix(schedule, 0.99)
        s = np.zeros(40)
        s[7] = 1.0
        # the deviation being ~0 certifies z_t == kappa[t][8] for all t
        assert verify_trace_expansion(s, schedule, 0.99) <= 1e-12

    def test_random_inputs_long_horizon(self):
        rng = np.random.default_rng(5)
        schedule = random_schedule(1000, 6)
        s = (rng.random(1000) < 0.1).astype(float)
        assert verify_trace_expansion(s, schedule, 0.995) <= 1e-10

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            verify_trace_expansion(np.zeros(9), random_schedule(10, 0), 0.9)


class TestEffectiveTime:
    def test_unit_schedule(self):
        schedule = WarpSchedule(omega=np.ones(20))
        assert effective_time(schedule, 3, 15) == 12.0

    def test_half_schedule(self):
        schedule = WarpSchedule(omega=np.full(20, 0.5))
        assert effective_time(schedule, 5, 15) == pytest.approx(5.0)

    def test_zero_lag_and_order(self):
        schedule = random_schedule(10, 7)
        assert effective_time(schedule, 4, 4) == 0.0
        with pytest.raises(ContractError):
            effective_time(schedule, 5, 4)

    def test_kernel_consistency(self):
        schedule = random_schedule(200, 8)
        km = kernel_matrix(schedule, 0.995)
        rng = np.random.default_rng(9)
        for _ in range(100):
            t = int(rng.integers(0, 201))
            k = int(rng.integers(0, t + 1))
            tau = effective_time(schedule, k, t)
            assert abs(km.kappa[t, k] - 0.995 ** tau) <= 1e-12


class TestNonstationarity:
    def test_constant_schedule_none(self):
        assert check_nonstationarity(
            WarpSchedule(omega=np.full(30, 0.7)), 0.995) is None

    def test_two_window_witness(self):
        omega = np.concatenate([np.full(10, 0.2), np.full(10, 1.0)])
        w = check_nonstationarity(WarpSchedule(omega=omega), 0.9)
        assert isinstance(w, NonstationarityWitness)
        assert w.t1 - w.k1 == w.t2 - w.k2 == w.lag
        assert abs(w.kappa1 - w.kappa2) > 1e-9

    def test_witness_falsifies_every_fixed_decay(self):
        omega = np.concatenate([np.full(10, 0.2), np.full(10, 1.0)])
        w = check_nonstationarity(WarpSchedule(omega=omega), 0.9)
        # the only fixed rate reproducing the first weight fails on the second
        alpha_tilde = w.kappa1 ** (1.0 / w.lag)
        assert abs(alpha_tilde ** w.lag - w.kappa2) > 1e-6


class TestRetention:
    def test_canonical_construction(self):
        report = retention_report(0.995, 100, 0.5)
        assert report.fixed_horizon_lag == 139
        assert 0.0 < report.omega_bar < 1.0
        assert report.local_ok and report.retention_ok
        assert report.kappa_at_witness >= 0.5
        assert report.fixed_at_witness < 0.5

    def test_infeasible_when_fixed_kernel_suffices(self):
        with pytest.raises(InfeasibleScheduleError):
            construct_retention_schedule(0.995, 10, 0.99)

    def test_verifier_rejects_broken_schedule(self):
        schedule = construct_retention_schedule(0.995, 100, 0.5)
        bad = WarpSchedule(omega=np.full(schedule.T, 1.0))
        report = verify_retention_schedule(bad, 0.995, 100, 0.5)
        assert report.local_ok and not report.retention_ok

    def test_selective_retention_gap(self):
        _, w_slow, w_fast, diff = selective_retention_witness()
        assert diff >= 0.3
        assert w_slow == pytest.approx(0.995 ** 20, rel=1e-12)
        assert w_fast == pytest.approx(0.995 ** 200, rel=1e-12)


class TestBoundsAndProfiles:
    def test_verify_bounds_random_runs(self):
        rng = np.random.default_rng(11)
        hp = ModelHyperparams(channels=4, hidden=6, warp_floor=0.1)
        params = init_cpsnn_params(hp, rng)
        params.w_ctrl[:] = rng.normal(0, 2.0, size=params.w_ctrl.shape)
        params.b_ctrl[:] = rng.normal(0, 3.0, size=4)
        s = (rng.random((8, 200, 4)) < 0.3).astype(float)
        _, _, tape = batch_forward(s, params, hp)
        out = verify_bounds(tape, hp, params)
        assert out["f_ok"] and out["z_linear_ok"] and out["current_ok"]
        assert out["z_geo_ok"]

    def test_gradient_flow_dispatch(self):
        rng = np.random.default_rng(12)
        hp = ModelHyperparams(channels=3, hidden=4)
        from cpsnn.params import INITIALIZERS
        s = (rng.random((1, 20, 3)) < 0.3).astype(float)
        for kind in ("cpsnn", "snn_fixed", "snn_adaptive"):
            params = INITIALIZERS[kind](hp, rng)
            params.w_out[:] = rng.normal(size=params.w_out.shape)
            _, _, tape = forward_batch(kind, s, params, hp)
            profile = gradient_flow_profile(tape, 1, params, hp)
            assert profile.shape == (20,)
            assert np.all(np.isfinite(profile))

    def test_zero_input_zero_profile(self):
        hp = ModelHyperparams(channels=3, hidden=4)
        params = init_fixed_params(hp, np.random.default_rng(0))
        _, _, tape = forward_batch("snn_fixed", np.zeros((1, 15, 3)), params, hp)
        profile = gradient_flow_profile(tape, 0, params, hp)
        assert np.all(profile == 0.0)


class TestScalingAndDiagnostics:
    def test_scaling_state_bytes_constant_in_T(self):
        rows = scaling_probe([(500, 16, 4), (5000, 16, 4)], repeats=1)
        assert rows[0]["peak_state_bytes"] == rows[1]["peak_state_bytes"]
        assert all(r["wall_time"] > 0 for r in rows)

    def test_doubling_channels_doubles_trace_bytes(self):
        rows = scaling_probe([(200, 16, 4), (200, 16, 8)], repeats=1)
        assert rows[1]["trace_state_bytes"] == 2 * rows[0]["trace_state_bytes"]

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            scaling_probe([])

    def test_scaling_csv(self, tmp_path):
        rows = scaling_probe([(200, 8, 4)], repeats=1)
        path = tmp_path / "scaling.csv"
        write_scaling_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("T,N,C,wall_time")
        assert len(lines) == 2

    def test_diagnostics_zero_input(self, tmp_path):
        hp = ModelHyperparams(channels=3, hidden=4)
        params = init_cpsnn_params(hp, np.random.default_rng(0))
        paths = diagnostics_dump(params, hp, np.zeros((10, 3)),
                                 tmp_path / "traces.csv", tmp_path / "warp.csv")
        traces = np.loadtxt(paths["traces"], delimiter=",", skiprows=1)
        assert np.all(traces[:, 1:] == 0.0)  # every trace column is zero
        warp = np.loadtxt(paths["warp"], delimiter=",", skiprows=1)
        bias_response = 1.0 / (1.0 + math.exp(-4.0))
        assert np.allclose(warp[:, 1:], bias_response)

    def test_diagnostics_single_spike_matches_kernel(self, tmp_path):
        hp = ModelHyperparams(channels=2, hidden=4)
        params = init_cpsnn_params(hp, np.random.default_rng(1))
        T = 30
        s = np.zeros((T, 2))
        s[3, 0] = 1.0
        paths = diagnostics_dump(params, hp, s, tmp_path / "t.csv",
                                 tmp_path / "w.csv")
        traces = np.loadtxt(paths["traces"], delimiter=",", skiprows=1)
        warp = np.loadtxt(paths["warp"], delimiter=",", skiprows=1)
        z_col = traces[:, 1 + 2]  # z channel 0
        omega = warp[:, 2]        # per-channel omega, channel 0
        km = kernel_matrix(WarpSchedule(omega=omega), hp.alpha_s)
        # z_t after a single spike at step 3 equals the kernel weight
        for t in range(3, T):
            assert z_col[t] == pytest.approx(km.kappa[t + 1, 4], rel=1e-10)

    def test_diagnostics_round_trip(self, tmp_path):
        hp = ModelHyperparams(channels=2, hidden=3)
        params = init_cpsnn_params(hp, np.random.default_rng(2))
        rng = np.random.default_rng(3)
        s = (rng.random((12, 2)) < 0.3).astype(float)
        p1 = diagnostics_dump(params, hp, s, tmp_path / "a.csv",
                              tmp_path / "b.csv")
        p2 = diagnostics_dump(params, hp, s, tmp_path / "c.csv",
                              tmp_path / "d.csv")
        assert (tmp_path / "a.csv").read_text().splitlines()[1:] == \
            (tmp_path / "c.csv").read_text().splitlines()[1:]
