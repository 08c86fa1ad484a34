"""Kernel backend selection: numba-jitted or pure-numpy interpreted.

The hot numerical kernels are written once in numba-compatible numpy style.
By default they are compiled with ``numba.njit``; setting the environment
variable ``ANONQCD_NUMBA=0`` before import skips compilation and runs the
same source as plain Python (slow, but dependency-light and easier to debug).
"""

import os

_flag = os.environ.get("ANONQCD_NUMBA", "1").strip().lower()
USE_NUMBA = _flag not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def jit_kernel(func):
    """Compile a hot kernel with njit, or return it unchanged under the fallback."""
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def jit_inline(func):
    """Like jit_kernel, but force IR inlining into jitted callers."""
    if USE_NUMBA:
        return _njit(cache=True, nogil=True, inline="always")(func)
    return func


def python_version(func):
    """The uncompiled version of a kernel (for backend comparison benchmarks)."""
    return getattr(func, "py_func", func)
