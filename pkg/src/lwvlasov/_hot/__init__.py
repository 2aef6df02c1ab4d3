"""Hot loops: characteristics through gridded fields and retarded spline sums.

Every kernel exists twice, as a numba ``@njit`` loop and as a vectorized numpy
routine with identical arithmetic.  The public names below resolve to the
numba versions unless ``LWVLASOV_DISABLE_NUMBA`` is set.
"""
from .._accel import USE_NUMBA
from . import characteristics, retarded

if USE_NUMBA:
    trace = characteristics.trace_numba
    retarded_sum = retarded.retarded_sum_numba
else:
    trace = characteristics.trace_numpy
    retarded_sum = retarded.retarded_sum_numpy

__all__ = ["trace", "retarded_sum", "characteristics", "retarded"]
