"""JIT switch.

Kernels are written once as plain Python loops and compiled with numba when it
is importable and ``TRAILMARK_DISABLE_JIT`` is unset (or ``0``).  With the
flag set, callers get the vectorized numpy implementations instead.
"""

import os

_flag = os.environ.get("TRAILMARK_DISABLE_JIT", "").strip().lower()
JIT_REQUESTED = _flag in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

USE_JIT = JIT_REQUESTED and HAVE_NUMBA


def njit(func):
    """Compile ``func`` with numba (nopython, nogil, cached) if available."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def worker_count():
    """Worker cap from ``TRAILMARK_THREADS`` (default 1)."""
    raw = os.environ.get("TRAILMARK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
