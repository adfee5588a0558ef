"""JIT selection.

Kernels in :mod:`opflow.kernels` exist as numba-compiled loops and as
numpy/Python fallbacks. Set ``OPFLOW_DISABLE_JIT=1`` (or run without numba
installed) to use the fallbacks.
"""

import os

_flag = os.environ.get("OPFLOW_DISABLE_JIT", "").strip().lower()

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

USE_JIT = _njit is not None and _flag not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` in nopython mode, caching to disk."""
    if _njit is None:
        return fn
    return _njit(cache=True, nogil=True)(fn)


def pick(jitted, fallback):
    return jitted if USE_JIT else fallback
