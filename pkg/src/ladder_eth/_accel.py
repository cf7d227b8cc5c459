"""Backend selection for the hot kernels.

Set ``LADDER_ETH_BACKEND=numpy`` to bypass numba entirely; any other value
(or leaving it unset) uses numba when it is importable.
"""
import os

BACKEND = os.environ.get("LADDER_ETH_BACKEND", "numba").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and BACKEND != "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise an identity decorator."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def set_num_threads_from_env():
    """Honour ``LADDER_ETH_THREADS`` for numba and return the worker count."""
    value = os.environ.get("LADDER_ETH_THREADS")
    if not value:
        return 1
    n = max(1, int(value))
    if USE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n
