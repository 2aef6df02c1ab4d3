"""Numba switch shared by the hot kernels.

Set ``LWVLASOV_DISABLE_NUMBA=1`` to force the pure-numpy code paths.  The flag
is read once at import time.
"""
import os

_FLAG = os.environ.get("LWVLASOV_DISABLE_NUMBA", "").strip().lower()

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def backend():
    return "numba" if USE_NUMBA else "numpy"
