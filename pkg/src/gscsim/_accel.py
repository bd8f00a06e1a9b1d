"""Numba switch for the hot kernels.

Set ``GSCSIM_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to run
every kernel as plain numpy. The kernels are written in the subset of numpy
that numba compiles, so both paths execute the same source.
"""
import logging
import os

logger = logging.getLogger(__name__)


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = not (_flag("GSCSIM_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT"))

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        logger.warning("numba not importable, falling back to numpy kernels")
        USE_NUMBA = False


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    def wrap(f):
        if USE_NUMBA:
            opts = {"cache": True}
            opts.update(kwargs)
            return numba.njit(**opts)(f)
        return f
    return wrap if func is None else wrap(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"
