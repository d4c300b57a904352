"""Backend selection for the hot simulation kernels.

Kernels are compiled with numba when it is importable and the environment
variable ``TILTMAX_BACKEND`` is not set to ``numpy``.  Setting
``TILTMAX_BACKEND=numpy`` (or ``TILTMAX_DISABLE_NUMBA=1``) routes every kernel
through its vectorized numpy twin instead.  Both paths consume the same
pre-drawn random arrays, so they agree up to floating point summation order.
"""
from __future__ import annotations

import os

try:
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    NUMBA_AVAILABLE = False


def _requested_backend() -> str:
    if os.environ.get("TILTMAX_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    return os.environ.get("TILTMAX_BACKEND", "numba").strip().lower() or "numba"


def use_numba() -> bool:
    """True when kernels should dispatch to the compiled implementation."""
    return NUMBA_AVAILABLE and _requested_backend() != "numpy"


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if _njit is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _njit(*args, **kwargs)
