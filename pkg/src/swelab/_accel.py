"""Backend switch between numba-compiled kernels and the pure-numpy path.

Set ``SWELAB_DISABLE_NUMBA=1`` in the environment (before import) to force
the numpy fallback even when numba is installed.
"""

import os

_DISABLED = os.environ.get("SWELAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by SWELAB_DISABLE_NUMBA")
    import numba

    NUMBA_AVAILABLE = True
except ImportError:
    numba = None
    NUMBA_AVAILABLE = False

NUMBA_INSTALLED = True
try:
    import numba as _numba_probe  # noqa: F401
except ImportError:
    NUMBA_INSTALLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when the numba backend is active, identity otherwise."""
    if NUMBA_AVAILABLE:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def decorator(func):
        return func

    return decorator


def force_njit(func, **kwargs):
    """Compile ``func`` with numba regardless of the env flag (benchmarks, tests).

    Returns None when numba is not installed.
    """
    if not NUMBA_INSTALLED:
        return None
    import numba as _nb

    return _nb.njit(cache=False, **kwargs)(func)


def backend_name():
    return "numba" if NUMBA_AVAILABLE else "numpy"
