"""Optional numba acceleration.

Kernels in :mod:`idprisk.kernels` are written twice: a pure-numpy version and
a loop version compiled with ``numba.njit``. The compiled path is used when
numba imports cleanly and ``IDPRISK_DISABLE_NUMBA`` is unset (or ``0``).
"""

from __future__ import annotations

import os

_FLAG = "IDPRISK_DISABLE_NUMBA"


def _disabled_by_env() -> bool:
    return os.environ.get(_FLAG, "0").strip().lower() not in ("", "0", "false", "no")


try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    _numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    """True when the compiled kernels are the active path."""
    return HAVE_NUMBA and not _disabled_by_env()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap
