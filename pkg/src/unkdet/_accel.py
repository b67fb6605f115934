"""Backend selection for the numeric kernels.

Set ``UNKDET_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy path is used regardless of the flag.
"""

import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_DISABLED = os.environ.get("UNKDET_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

USE_NUMBA = HAS_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise.

    The decorated function is always compiled when numba exists, so tests can
    exercise both kernel families regardless of ``USE_NUMBA``.
    """
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
