"""Compare the compiled (numba) and plain-numpy kernel backends.

The backend is chosen at import time from the CPSNN_BACKEND environment
variable, so this script re-launches itself in a subprocess per backend and
times the batched forward/backward pass and streaming inference.

Usage: python benchmarks/bench_backends.py
"""

import json
import os
import subprocess
import sys
import time


def measure() -> dict:
    import numpy as np

    import cpsnn
    from cpsnn import ModelHyperparams
    from cpsnn.dynamics import run_stream
    from cpsnn.params import init_cpsnn_params
    from cpsnn.train import backward_batch, forward_batch

    rng = np.random.default_rng(0)
    hp = ModelHyperparams(channels=8, hidden=64)
    params = init_cpsnn_params(hp, rng)
    s = (rng.random((64, 100, 8)) < 0.05).astype(float)
    labels = rng.integers(0, 2, size=64)

    def step():
        _, _, tape = forward_batch("cpsnn", s, params, hp)
        backward_batch("cpsnn", tape, labels, params, hp)

    step()  # warm-up / jit compile
    reps = 5
    t0 = time.perf_counter()
    for _ in range(reps):
        step()
    train_time = (time.perf_counter() - t0) / reps

    buf = (rng.random((64, 8)) < 0.05).astype(float)
    run_stream(hp, params, 1000, buf)
    t0 = time.perf_counter()
    run_stream(hp, params, 100_000, buf)
    stream_time = time.perf_counter() - t0

    return {"backend": cpsnn.BACKEND,
            "train_step_s": train_time,
            "stream_100k_s": stream_time}


def main():
    if os.environ.get("_BENCH_CHILD"):
        print(json.dumps(measure()))
        return
    results = []
    for backend in ("numba", "numpy"):
        env = dict(os.environ, CPSNN_BACKEND=backend, _BENCH_CHILD="1")
        out = subprocess.run([sys.executable, __file__], env=env,
                             capture_output=True, text=True, check=True)
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))
    print(f"{'backend':<8} {'fwd+bwd batch (s)':>18} {'stream 100k steps (s)':>22}")
    for r in results:
        print(f"{r['backend']:<8} {r['train_step_s']:>18.4f} {r['stream_100k_s']:>22.4f}")
    if len(results) == 2 and results[1]["train_step_s"] > 0:
        speedup = results[1]["train_step_s"] / results[0]["train_step_s"]
        print(f"numba speedup on the training step: {speedup:.1f}x")


if __name__ == "__main__":
    main()
