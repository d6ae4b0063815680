"""Backend selection for the hot numeric kernels.

Kernels exist twice: a numba ``@njit`` loop version and a vectorized numpy
version. Set ``STLRNN_DISABLE_NUMBA=1`` to force the numpy path (or when numba
is not importable).
"""

import os

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

JIT_OPTIONS = {"nogil": True, "cache": True}


def _env_disabled():
    return os.environ.get("STLRNN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def njit(func):
    """``numba.njit`` with the package defaults, or a no-op without numba."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(**JIT_OPTIONS)(func)
