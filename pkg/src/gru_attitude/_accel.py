"""Optional numba acceleration.

Hot kernels are written once in numba-compatible numpy code. When numba is
importable and ``GRU_ATTITUDE_DISABLE_NUMBA`` is unset (or ``0``), they are
compiled with ``@njit``; otherwise the plain Python functions run as-is.
"""

import os

ENV_FLAG = "GRU_ATTITUDE_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

DISABLED = os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")
NUMBA_ENABLED = numba is not None and not DISABLED


def jit(fn):
    """Compile ``fn`` with numba when enabled, else return it untouched."""
    if not NUMBA_ENABLED:
        return fn
    return numba.njit(cache=True)(fn)


def python_impl(fn):
    """The uncompiled function behind a (possibly) jitted kernel."""
    return getattr(fn, "py_func", fn)
