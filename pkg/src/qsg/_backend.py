"""Numba on/off switch for the hot simulation loops.

Set ``QSG_DISABLE_NUMBA=1`` before import to run every kernel as plain
Python/numpy. Both paths consume the same pre-drawn uniforms, so they
produce identical trajectories.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

USE_NUMBA = os.environ.get("QSG_DISABLE_NUMBA", "").strip().lower() in _FALSY

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def kernel(func):
    """Compile ``func`` with numba when enabled; keep the Python original on
    ``func.py_func`` either way so tests can compare both paths."""
    if not USE_NUMBA:
        func.py_func = func
        return func
    compiled = _njit(cache=True, nogil=True)(func)
    return compiled


BACKEND = "numba" if USE_NUMBA else "python"
