"""Backend selection for the hot numeric kernels.

Set ``FBM_BIPOLAR_DISABLE_NUMBA=1`` to force the pure numpy/scipy path.
"""
from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_FLAG = "FBM_BIPOLAR_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


try:
    import numba as _numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap
