"""Retarded sums of gridded cubic-spline histories over backward cones.

``out[p, c] = sum_m lag_w[m] sum_r w_omega[r] S_c(slice[m], x_p - lag[m] omega_r)``

where ``S_c(k, .)`` is the quintic B-spline with coefficients
``coeffs[k, :, :, :, c]`` on the grid ``origin + h * index``.  Coefficients
outside the array count as zero.  The caller folds the cone weight
``lag / (4 pi)`` into ``lag_w``.
"""
import numpy as np
from scipy import ndimage
from scipy.linalg import solve_banded

from .._accel import HAVE_NUMBA

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _beta5(x):
    x = abs(x)
    out = 0.0
    if x < 3.0:
        out += (3.0 - x) ** 5
        if x < 2.0:
            out -= 6.0 * (2.0 - x) ** 5
            if x < 1.0:
                out += 15.0 * (1.0 - x) ** 5
    return out / 120.0


@njit(cache=True)
def _bspline_weights(u, w):
    # taps at floor(g) - 2 .. floor(g) + 3
    for a in range(6):
        w[a] = _beta5(u + 2.0 - a)


@njit(cache=True)
def retarded_sum_numba(points, coeffs, origin, h, slice_idx, lags, lag_w, omega, w_omega):
    n_pts = points.shape[0]
    nx, ny, nz, nc = coeffs.shape[1], coeffs.shape[2], coeffs.shape[3], coeffs.shape[4]
    out = np.zeros((n_pts, nc))
    wx = np.empty(6)
    wy = np.empty(6)
    wz = np.empty(6)
    acc = np.empty(nc)
    for p in range(n_pts):
        for c in range(nc):
            acc[c] = 0.0
        for m in range(slice_idx.shape[0]):
            k = slice_idx[m]
            s = lags[m]
            for r in range(omega.shape[0]):
                gx = (points[p, 0] - s * omega[r, 0] - origin[0]) / h
                gy = (points[p, 1] - s * omega[r, 1] - origin[1]) / h
                gz = (points[p, 2] - s * omega[r, 2] - origin[2]) / h
                ix = int(np.floor(gx))
                iy = int(np.floor(gy))
                iz = int(np.floor(gz))
                if ix + 3 < 0 or iy + 3 < 0 or iz + 3 < 0 or ix - 2 > nx - 1 or iy - 2 > ny - 1 or iz - 2 > nz - 1:
                    continue
                _bspline_weights(gx - ix, wx)
                _bspline_weights(gy - iy, wy)
                _bspline_weights(gz - iz, wz)
                wgt = lag_w[m] * w_omega[r]
                for a in range(6):
                    ia = ix - 2 + a
                    if ia < 0 or ia >= nx:
                        continue
                    for b in range(6):
                        ib = iy - 2 + b
                        if ib < 0 or ib >= ny:
                            continue
                        wab = wgt * wx[a] * wy[b]
                        for d in range(6):
                            idd = iz - 2 + d
                            if idd < 0 or idd >= nz:
                                continue
                            wabd = wab * wz[d]
                            for c in range(nc):
                                acc[c] += wabd * coeffs[k, ia, ib, idd, c]
        for c in range(nc):
            out[p, c] = acc[c]
    return out


def retarded_sum_numpy(points, coeffs, origin, h, slice_idx, lags, lag_w, omega, w_omega, chunk=1 << 20):
    n_pts = points.shape[0]
    nc = coeffs.shape[4]
    out = np.zeros((n_pts, nc))
    n_om = omega.shape[0]
    rows = max(1, chunk // max(n_om, 1))
    for m in range(slice_idx.size):
        k = int(slice_idx[m])
        for start in range(0, n_pts, rows):
            P = points[start:start + rows]
            X = P[:, None, :] - lags[m] * omega[None, :, :]
            G = ((X - origin) / h).reshape(-1, 3).T
            for c in range(nc):
                vals = ndimage.map_coordinates(coeffs[k, ..., c], G, order=5, prefilter=False,
                                               mode="grid-constant", cval=0.0)
                out[start:start + rows, c] += lag_w[m] * (vals.reshape(P.shape[0], n_om) @ w_omega)
    return out


def spline_coefficients(values):
    """Quintic B-spline coefficients interpolating ``values[..., c]`` on the three grid axes.

    Coefficients beyond the array are taken as zero, which matches the tap
    rule of the evaluators above; along each axis this is the banded system
    ``(c[i-2] + 26 c[i-1] + 66 c[i] + 26 c[i+1] + c[i+2]) / 120 = values[i]``.
    """
    out = np.array(values, dtype=float)
    for axis in range(3):
        n = out.shape[axis]
        band = np.empty((5, n))
        band[[0, 4]] = 1.0 / 120.0
        band[[1, 3]] = 26.0 / 120.0
        band[2] = 66.0 / 120.0
        moved = np.moveaxis(out, axis, 0)
        flat = moved.reshape(n, -1)
        solved = solve_banded((2, 2), band, flat)
        out = np.moveaxis(solved.reshape(moved.shape), 0, axis)
    return np.ascontiguousarray(out)
