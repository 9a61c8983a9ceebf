"""Optional numba acceleration.

Set ``FINTIME_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The decorated functions keep the undecorated version on ``.py_func`` either
way, so both paths can be compared side by side.
"""
import logging
import os

_DISABLED = os.environ.get("FINTIME_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:  # pragma: no cover - import guard
    if _DISABLED:
        raise ImportError
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_ENABLED = False


def kernel(func):
    """Compile ``func`` with ``numba.njit`` when available, else return it as-is."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    func.py_func = func
    return func
