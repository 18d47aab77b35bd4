"""Backend selection for the hot per-timestep kernels.

The recurrence loops in :mod:`cpsnn.kernels` are written in a numba-compatible
numpy subset. By default they are compiled with ``numba.njit``; setting the
environment variable ``CPSNN_BACKEND=numpy`` runs the exact same source as
plain numpy, which is useful for debugging and on machines without numba.
"""

import os

_ENV_VAR = "CPSNN_BACKEND"


def _select() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _select()

if BACKEND == "numba":
    from numba import njit

    def jit_kernel(fn):
        return njit(cache=True, fastmath=False)(fn)
else:

    def jit_kernel(fn):
        return fn
