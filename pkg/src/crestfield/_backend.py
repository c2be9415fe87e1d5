"""Kernel backend selection.

Hot loops are written twice: once as numba ``@njit`` kernels and once as plain
numpy. ``CRESTFIELD_BACKEND=numpy`` forces the numpy path; otherwise numba is
used when importable. ``CRESTFIELD_THREADS`` caps numba's thread pool.
"""

import os
import warnings

_requested = os.environ.get("CRESTFIELD_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(f"unknown CRESTFIELD_BACKEND={_requested!r}; using numba")
    _requested = "numba"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

USE_NUMBA = _requested == "numba" and _numba is not None
BACKEND = "numba" if USE_NUMBA else "numpy"

if _numba is not None and "NUMBA_THREADING_LAYER" not in os.environ:
    # the default probe warns about old TBB builds; workqueue is always available
    _numba.config.THREADING_LAYER = "workqueue"

if _numba is not None:
    _threads = os.environ.get("CRESTFIELD_THREADS")
    if _threads:
        try:
            _numba.set_num_threads(max(1, min(int(_threads), _numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            warnings.warn(f"ignoring CRESTFIELD_THREADS={_threads!r}")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise."""
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba.njit(*args, **kwargs)


prange = range if _numba is None else _numba.prange
