"""Backend selection for the numerical kernels.

SO3LAB_JIT=0 disables numba compilation and every kernel runs as plain
numpy/Python. Any other value (or an unset variable) enables numba. The
flag is read once at import time.

SO3LAB_THREADS caps the Monte Carlo worker pool (default: cpu count,
at most 8).
"""

import os


def _jit_enabled() -> bool:
    return os.environ.get("SO3LAB_JIT", "1").strip().lower() not in ("0", "false", "off")


JIT_ENABLED = _jit_enabled()

if JIT_ENABLED:
    from numba import njit

    def jit(fn):
        # no fastmath: bit-reproducibility across backends matters more
        # than the last few percent of speed
        return njit(cache=True, nogil=True)(fn)
else:
    def jit(fn):
        return fn


def thread_count() -> int:
    raw = os.environ.get("SO3LAB_THREADS", "")
    if raw.strip():
        n = int(raw)
        if n < 1:
            raise ValueError("SO3LAB_THREADS must be >= 1")
        return n
    return min(os.cpu_count() or 1, 8)
