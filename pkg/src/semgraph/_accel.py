"""Optional numba acceleration.

Hot kernels are written once in loop form and compiled with ``njit`` when numba
is importable and ``SEMGRAPH_DISABLE_NUMBA`` is unset (or ``0``). Otherwise the
callers route to their pure-numpy implementations.
"""

import os

_disabled = os.environ.get("SEMGRAPH_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    from numba import njit as _numba_njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba_njit = None

NUMBA_AVAILABLE = _numba_njit is not None
USE_NUMBA = NUMBA_AVAILABLE and not _disabled


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if NUMBA_AVAILABLE:
        return _numba_njit(*args, **kwargs)

    def decorator(func):
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return decorator
