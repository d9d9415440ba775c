"""Numba switch for the hot kernels.

Set ``DGWF_DISABLE_JIT=1`` in the environment to force the pure-numpy
paths (useful for debugging and for the backend benchmark). The flag is
read once at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

JIT_OPTIONS = {
    "nogil": True,
    "cache": True,
    "fastmath": True,
}

_FALSEY = ("", "0", "false", "no", "off")

JIT_DISABLED = os.environ.get("DGWF_DISABLE_JIT", "0").strip().lower() not in _FALSEY
USE_NUMBA = numba is not None and not JIT_DISABLED


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if numba is None:
        return func
    return numba.njit(**JIT_OPTIONS)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
