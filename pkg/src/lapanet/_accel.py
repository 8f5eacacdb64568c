"""Numba toggle.

Set ``LAPANET_NO_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or on platforms without a working LLVM.
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False


def numba_enabled():
    flag = os.environ.get("LAPANET_NO_NUMBA", "").strip().lower()
    return HAS_NUMBA and flag not in ("1", "true", "yes", "on")


def njit(func=None, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    opts = {"cache": True}
    opts.update(kwargs)

    def wrap(f):
        if not HAS_NUMBA:
            return f
        return numba.njit(**opts)(f)

    if func is not None:
        return wrap(func)
    return wrap
