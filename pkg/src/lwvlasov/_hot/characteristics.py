"""RK4 characteristics ``dx/dt = v(xi)``, ``dxi/dt = E + v x B`` through gridded fields.

Field history layout: ``fields[k, i, j, l, c]`` holds ``(E1, E2, E3, B1, B2,
B3)`` at time ``k * dt_slice`` and grid point ``origin + h * (i, j, l)``.
Interpolation is trilinear in space and linear in time; times outside the
stored slices are clamped.  A stage evaluated outside the spatial grid uses
zero field and raises the sample's flag.
"""
import numpy as np

from .._accel import HAVE_NUMBA

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# numba


@njit(cache=True)
def _sample_nb(fields, origin, h, dt_slice, t, x0, x1, x2, out):
    ns, nx, ny, nz = fields.shape[0], fields.shape[1], fields.shape[2], fields.shape[3]
    gx = (x0 - origin[0]) / h
    gy = (x1 - origin[1]) / h
    gz = (x2 - origin[2]) / h
    if gx < 0.0 or gy < 0.0 or gz < 0.0 or gx > nx - 1 or gy > ny - 1 or gz > nz - 1:
        for c in range(6):
            out[c] = 0.0
        return 1
    i = min(int(gx), nx - 2)
    j = min(int(gy), ny - 2)
    l = min(int(gz), nz - 2)
    fx = gx - i
    fy = gy - j
    fz = gz - l
    tt = t / dt_slice
    if tt <= 0.0 or ns == 1:
        k = 0
        ft = 0.0
    elif tt >= ns - 1:
        k = ns - 2
        ft = 1.0
    else:
        k = int(tt)
        ft = tt - k
    k1 = min(k + 1, ns - 1)
    for c in range(6):
        acc = 0.0
        for a in range(2):
            wa = fx if a == 1 else 1.0 - fx
            for b in range(2):
                wb = fy if b == 1 else 1.0 - fy
                for d in range(2):
                    wd = fz if d == 1 else 1.0 - fz
                    w = wa * wb * wd
                    v0 = fields[k, i + a, j + b, l + d, c]
                    v1 = fields[k1, i + a, j + b, l + d, c]
                    acc += w * ((1.0 - ft) * v0 + ft * v1)
        out[c] = acc
    return 0


@njit(cache=True)
def _rhs_nb(fields, origin, h, dt_slice, t, y, dy, eb):
    flag = _sample_nb(fields, origin, h, dt_slice, t, y[0], y[1], y[2], eb)
    g = 1.0 / np.sqrt(1.0 + y[3] * y[3] + y[4] * y[4] + y[5] * y[5])
    v0 = y[3] * g
    v1 = y[4] * g
    v2 = y[5] * g
    dy[0] = v0
    dy[1] = v1
    dy[2] = v2
    dy[3] = eb[0] + (v1 * eb[5] - v2 * eb[4])
    dy[4] = eb[1] + (v2 * eb[3] - v0 * eb[5])
    dy[5] = eb[2] + (v0 * eb[4] - v1 * eb[3])
    return flag


@njit(cache=True)
def trace_numba(x, xi, t_start, t_end, n_steps, fields, origin, h, dt_slice):
    n = x.shape[0]
    x_out = np.empty_like(x)
    xi_out = np.empty_like(xi)
    flags = np.zeros(n, dtype=np.int8)
    step = (t_end - t_start) / n_steps
    y = np.empty(6)
    yt = np.empty(6)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    eb = np.empty(6)
    for p in range(n):
        for c in range(3):
            y[c] = x[p, c]
            y[3 + c] = xi[p, c]
        flag = 0
        for s in range(n_steps):
            t = t_start + s * step
            flag |= _rhs_nb(fields, origin, h, dt_slice, t, y, k1, eb)
            for c in range(6):
                yt[c] = y[c] + 0.5 * step * k1[c]
            flag |= _rhs_nb(fields, origin, h, dt_slice, t + 0.5 * step, yt, k2, eb)
            for c in range(6):
                yt[c] = y[c] + 0.5 * step * k2[c]
            flag |= _rhs_nb(fields, origin, h, dt_slice, t + 0.5 * step, yt, k3, eb)
            for c in range(6):
                yt[c] = y[c] + step * k3[c]
            flag |= _rhs_nb(fields, origin, h, dt_slice, t + step, yt, k4, eb)
            for c in range(6):
                y[c] = y[c] + step / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
        for c in range(3):
            x_out[p, c] = y[c]
            xi_out[p, c] = y[3 + c]
        flags[p] = flag
    return x_out, xi_out, flags


# ---------------------------------------------------------------------------
# numpy


def sample_numpy(fields, origin, h, dt_slice, t, X):
    """Interpolated ``(E, B)`` at points ``X`` (n, 3) and a per-point outside flag."""
    ns, nx, ny, nz = fields.shape[:4]
    G = (X - origin) / h
    upper = np.array([nx - 1, ny - 1, nz - 1])
    outside = np.any((G < 0.0) | (G > upper), axis=1)
    G = np.where(outside[:, None], 0.0, G)
    idx = np.minimum(G.astype(np.int64), upper - 1)
    f = G - idx
    tt = t / dt_slice
    if tt <= 0.0 or ns == 1:
        k, ft = 0, 0.0
    elif tt >= ns - 1:
        k, ft = ns - 2, 1.0
    else:
        k = int(tt)
        ft = tt - k
    k1 = min(k + 1, ns - 1)
    out = np.zeros((X.shape[0], 6))
    for a in range(2):
        wa = f[:, 0] if a == 1 else 1.0 - f[:, 0]
        for b in range(2):
            wb = f[:, 1] if b == 1 else 1.0 - f[:, 1]
            for d in range(2):
                wd = f[:, 2] if d == 1 else 1.0 - f[:, 2]
                w = wa * wb * wd
                i, j, l = idx[:, 0] + a, idx[:, 1] + b, idx[:, 2] + d
                v0 = fields[k, i, j, l]
                v1 = fields[k1, i, j, l]
                out += w[:, None] * ((1.0 - ft) * v0 + ft * v1)
    out[outside] = 0.0
    return out, outside


def _rhs_numpy(fields, origin, h, dt_slice, t, y):
    eb, outside = sample_numpy(fields, origin, h, dt_slice, t, y[:, :3])
    g = 1.0 / np.sqrt(1.0 + np.sum(y[:, 3:] ** 2, axis=1))
    v = y[:, 3:] * g[:, None]
    dy = np.empty_like(y)
    dy[:, :3] = v
    dy[:, 3:] = eb[:, :3] + np.cross(v, eb[:, 3:])
    return dy, outside


def trace_numpy(x, xi, t_start, t_end, n_steps, fields, origin, h, dt_slice):
    y = np.concatenate([x, xi], axis=1).astype(float)
    flags = np.zeros(x.shape[0], dtype=bool)
    step = (t_end - t_start) / n_steps
    for s in range(n_steps):
        t = t_start + s * step
        k1, o1 = _rhs_numpy(fields, origin, h, dt_slice, t, y)
        k2, o2 = _rhs_numpy(fields, origin, h, dt_slice, t + 0.5 * step, y + 0.5 * step * k1)
        k3, o3 = _rhs_numpy(fields, origin, h, dt_slice, t + 0.5 * step, y + 0.5 * step * k2)
        k4, o4 = _rhs_numpy(fields, origin, h, dt_slice, t + step, y + step * k3)
        y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        flags |= o1 | o2 | o3 | o4
    return y[:, :3].copy(), y[:, 3:].copy(), flags.astype(np.int8)
