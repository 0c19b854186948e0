# Numba is optional at runtime. Set MIXZONE_DISABLE_NUMBA=1 to force the
# pure-numpy kernels even when numba is importable.

import os

_DISABLED = os.environ.get("MIXZONE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as nb
except ImportError:  # pragma: no cover - depends on environment
    nb = None
else:
    # The TBB layer warns on old system TBB builds; results do not depend on it.
    if "NUMBA_THREADING_LAYER" not in os.environ:
        nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

NUMBA_AVAILABLE = nb is not None
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if nb is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def identity(fn):
            return fn

        return identity
    return nb.njit(*args, **kwargs)


if nb is not None:
    prange = nb.prange
else:  # pragma: no cover
    prange = range


def set_num_threads(n):
    """Cap numba worker threads; returns the count actually in effect."""
    if nb is None or n is None:
        return 1
    n = max(1, min(int(n), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(n)
    return n
