"""Numba switch.

Set ``HYPERDECODE_DISABLE_NUMBA=1`` to run every hot kernel through its
pure-numpy twin instead of the compiled loop. Both paths are kept in sync by
the test-suite, and ``benchmarks/bench_kernels.py`` times one against the other.
"""
import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_DISABLED = os.environ.get("HYPERDECODE_DISABLE_NUMBA", "0") not in ("", "0", "false")
USE_NUMBA = _numba is not None and not NUMBA_DISABLED


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is active, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if _numba is None:
            return f
        return _numba.njit(**kwargs)(f)

    if fn is not None:
        return wrap(fn)
    return wrap


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
