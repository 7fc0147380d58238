"""Optional numba acceleration.

Kernels are written twice: a numba ``@njit`` loop version and a pure-numpy
version.  ``FAIRCOMPOSE_DISABLE_NUMBA=1`` (or numba missing) selects numpy.
The flag is read once at import time.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("FAIRCOMPOSE_DISABLE_NUMBA", "").strip().lower()

try:  # pragma: no cover - depends on environment
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator.

    The undecorated function stays reachable as ``.py_func`` in both cases so
    tests can exercise the loop body without the compiler.
    """
    opts = {"cache": True, **kwargs}
    if _numba is None:
        def wrap(fn):
            fn.py_func = fn
            return fn
    else:
        def wrap(fn):
            return _numba.njit(**opts)(fn)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
