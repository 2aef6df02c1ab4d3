"""Characteristic flow of the Vlasov equation and pullback evaluation of f.

``f`` is transported by ``d_t f + v(xi) . grad_x f = div_xi(K f)`` with
``div_xi K = 0``, so it is constant along

    dx/dt = v(xi),    dxi/dt = -K(t, x, xi),

and ``K = -(E + v x B)`` for electromagnetic forces.  Values of ``f`` are
never stored: they are pulled back to t = 0 along these curves.
"""
import csv
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import _hot
from ._hot.characteristics import sample_numpy
from .kernels import velocities


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("phase point must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)


# ---------------------------------------------------------------------------
# force fields; K(t, x, xi) with x, xi of shape (n, 3)


class ZeroForce:
    def __call__(self, t, x, xi):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(xi)))

    def max_norm(self):
        return 0.0


@dataclass
class ConstantForce:
    """``K = c`` everywhere, so momenta drift by ``-c t``."""

    c: np.ndarray

    def __call__(self, t, x, xi):
        return np.broadcast_to(np.asarray(self.c, dtype=float), np.broadcast_shapes(np.shape(x), np.shape(xi))).copy()

    def max_norm(self):
        return float(np.linalg.norm(self.c))


class LorentzForce:
    """``K = -(E(t, x) + v(xi) x B(t, x))`` from callables ``E``, ``B``."""

    def __init__(self, E, B=None):
        self.E = E
        self.B = B

    def __call__(self, t, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        v = velocities(np.broadcast_to(xi, np.broadcast_shapes(x.shape, xi.shape)))
        K = -np.broadcast_to(self.E(t, x), v.shape)
        if self.B is not None:
            K = K - np.cross(v, np.broadcast_to(self.B(t, x), v.shape))
        return np.array(K)


class UniformEMForce(LorentzForce):
    """Lorentz force of constant fields ``E0``, ``B0``."""

    def __init__(self, E0, B0=(0.0, 0.0, 0.0)):
        self.E0 = np.asarray(E0, dtype=float)
        self.B0 = np.asarray(B0, dtype=float)
        super().__init__(lambda t, x: self.E0, lambda t, x: self.B0)

    def max_norm(self):
        return float(np.linalg.norm(self.E0) + np.linalg.norm(self.B0))


def uniform_em_force(E0, B0=(0.0, 0.0, 0.0)):
    return UniformEMForce(E0, B0)


class GriddedFieldHistory:
    """``(E, B)`` slices on a uniform grid at times ``k * dt``.

    Interpolation is trilinear in space and linear in time.  Points outside
    the grid see zero field and are flagged.
    """

    def __init__(self, origin, spacing, shape, dt):
        self.origin = np.asarray(origin, dtype=float)
        self.h = float(spacing)
        self.shape = tuple(int(n) for n in shape)
        self.dt = float(dt)
        self._slices: List[np.ndarray] = []
        self._stack = None

    def __len__(self):
        return len(self._slices)

    @property
    def t_last(self):
        return (len(self._slices) - 1) * self.dt

    def append(self, E, B):
        s = np.concatenate([np.asarray(E, dtype=float), np.asarray(B, dtype=float)], axis=-1)
        if s.shape != self.shape + (6,):
            raise ValueError("field slice has the wrong shape")
        self._slices.append(s)
        self._stack = None

    def replace_last(self, E, B):
        self._slices.pop()
        self.append(E, B)

    @property
    def fields(self):
        if self._stack is None:
            if not self._slices:
                raise RuntimeError("field history is empty")
            self._stack = np.ascontiguousarray(np.stack(self._slices))
        return self._stack

    def grid_points(self):
        axes = [self.origin[a] + self.h * np.arange(self.shape[a]) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def sample(self, t, x):
        eb, outside = sample_numpy(self.fields, self.origin, self.h, self.dt, t, np.atleast_2d(x))
        return eb[:, :3], eb[:, 3:], outside

    def __call__(self, t, x, xi):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        E, B, _ = self.sample(t, x)
        return -(E + np.cross(velocities(xi), B))

    def max_norm(self):
        F = self.fields
        return float(np.max(np.linalg.norm(F[..., :3], axis=-1) + np.linalg.norm(F[..., 3:], axis=-1)))


# ---------------------------------------------------------------------------
# integrators


def rk4_step(t, x, xi, dt, K):
    """One classical RK4 step of ``(x, xi)' = (v(xi), -K)`` for arrays of points.

    ``t`` and ``dt`` may be scalars or arrays with one entry per point.
    """
    def rhs(s, X, P):
        return velocities(P), -K(s, X, P)

    dtc = dt[:, None] if np.ndim(dt) == 1 else dt
    k1x, k1p = rhs(t, x, xi)
    k2x, k2p = rhs(t + 0.5 * dt, x + 0.5 * dtc * k1x, xi + 0.5 * dtc * k1p)
    k3x, k3p = rhs(t + 0.5 * dt, x + 0.5 * dtc * k2x, xi + 0.5 * dtc * k2p)
    k4x, k4p = rhs(t + dt, x + dtc * k3x, xi + dtc * k3p)
    return (x + dtc / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            xi + dtc / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p))


def characteristics_step(p: PhasePoint, t, dt, K) -> PhasePoint:
    """Advance one phase point by an RK4 step of size ``dt`` (negative runs backward)."""
    if dt == 0.0:
        raise ValueError("time step must be nonzero")
    x, xi = rk4_step(t, p.x[None], p.xi[None], dt, K)
    return PhasePoint(x[0], xi[0])


def flow(t0, t1, x, xi, K, max_step):
    """Integrate from ``t0`` to ``t1`` with equal RK4 steps no longer than ``max_step``.

    ``t0`` may be an array with one start time per point.  Returns
    ``(x, xi, flags)``; flags mark trajectories that left a gridded field's
    domain (always False for analytic forces).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    t0 = np.asarray(t0, dtype=float)
    span = np.abs(t1 - t0)
    if np.all(span == 0.0):
        return x.copy(), xi.copy(), np.zeros(x.shape[0], dtype=bool)
    n = max(1, int(np.ceil(np.max(span) / max_step - 1e-12)))
    if isinstance(K, ZeroForce):
        v = velocities(xi)
        dt = (t1 - t0)[..., None] if t0.ndim else (t1 - t0)
        return x + dt * v, xi.copy(), np.zeros(x.shape[0], dtype=bool)
    if isinstance(K, GriddedFieldHistory):
        if t0.ndim == 0:
            xo, po, fl = _hot.trace(np.ascontiguousarray(x), np.ascontiguousarray(xi), float(t0), float(t1), n,
                                    K.fields, K.origin, K.h, K.dt)
            return xo, po, fl.astype(bool)
        xo, po, fl = np.empty_like(x), np.empty_like(xi), np.zeros(x.shape[0], dtype=bool)
        for ts in np.unique(t0):
            sel = t0 == ts
            xo[sel], po[sel], fl[sel] = flow(ts, t1, x[sel], xi[sel], K, max_step)
        return xo, po, fl
    step = (t1 - t0) / n
    for s in range(n):
        x, xi = rk4_step(t0 + s * step, x, xi, step, K)
    return x, xi, np.zeros(x.shape[0], dtype=bool)


class PhaseDensity:
    """``f(t, x, xi)`` as the pullback of ``f^in`` along characteristics.

    Parameters
    ----------
    f_in : callable
        ``f_in(x, xi)`` with a ``gradient(x, xi)`` method.
    force : callable
        ``K(t, x, xi)``; a ``GriddedFieldHistory`` selects the compiled path.
    max_step : float
        Longest RK4 step used when tracing back to t = 0.
    """

    def __init__(self, f_in, force=None, max_step=0.025):
        self.f_in = f_in
        self.force = force if force is not None else ZeroForce()
        self.max_step = float(max_step)
        self.last_flags = None

    def foot_points(self, t, x, xi):
        return flow(t, 0.0, x, xi, self.force, self.max_step)

    def __call__(self, t, x, xi):
        x0, xi0, flags = self.foot_points(t, x, xi)
        self.last_flags = flags
        return self.f_in(x0, xi0)

    def gradient(self, t, x, xi, h=1e-4):
        """``(grad_x f, grad_xi f)`` from the foot-point Jacobian by central differences.

        ``grad f(t) = J^T grad f^in(foot)`` with ``J`` the Jacobian of the map
        ``(x, xi) -> foot``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = x.shape[0]
        x0, xi0, _ = self.foot_points(t, x, xi)
        gx0, gp0 = self.f_in.gradient(x0, xi0)
        g0 = np.concatenate([gx0, gp0], axis=1)
        J = np.empty((n, 6, 6))
        for a in range(6):
            e = np.zeros(6)
            e[a] = h
            xp, pp, _ = self.foot_points(t, x + e[:3], xi + e[3:])
            xm, pm, _ = self.foot_points(t, x - e[:3], xi - e[3:])
            J[:, :, a] = np.concatenate([xp - xm, pp - pm], axis=1) / (2 * h)
        g = np.einsum("nba,nb->na", J, g0)
        return g[:, :3], g[:, 3:]


def evaluate_f(density: PhaseDensity, t, x, xi):
    return density(t, x, xi)


# ---------------------------------------------------------------------------
# ensembles and support radius


@dataclass
class SupportRadius:
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    r_star: float = 0.0

    def record(self, t, R):
        self.times.append(float(t))
        self.values.append(float(R))
        self.r_star = max(self.r_star, float(R))
        return self


def support_radius(t, ensemble_xi, state: SupportRadius = None) -> SupportRadius:
    """``R_f(t) = max |xi|`` over a pushed ensemble, accumulated into ``r*``."""
    P = np.atleast_2d(np.asarray(ensemble_xi, dtype=float))
    if P.size == 0:
        raise ValueError("empty ensemble")
    state = state if state is not None else SupportRadius()
    return state.record(t, float(np.max(np.linalg.norm(P, axis=1))))


def seed_ensemble(profile, n, rng, include_sup=True):
    """Phase points drawn from the support of ``f^in``.

    Spatial points fill the support ball; momenta fill the momentum support
    with extra points on its boundary sphere, which carries the largest |xi|.
    The maximiser of ``f^in`` is prepended when ``include_sup`` is set.
    """
    c = np.asarray(profile.x_center, dtype=float)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = c + d * (profile.x_radius * rng.uniform(0, 1, size=n) ** (1 / 3))[:, None]
    d2 = rng.normal(size=(n, 3))
    d2 /= np.linalg.norm(d2, axis=1, keepdims=True)
    shift = np.asarray(getattr(profile, "xi_shift", np.zeros(3)), dtype=float)
    R = profile.momentum_support - float(np.linalg.norm(shift))
    rad = R * rng.uniform(0, 1, size=n) ** (1 / 3)
    rad[: n // 2] = R
    xi = shift + d2 * rad[:, None]
    if include_sup:
        _, (xs, ps) = profile.sup
        x = np.vstack([xs, x])
        xi = np.vstack([ps, xi])
    return x, xi


class Ensemble:
    """Forward-pushed phase points with their support-radius log."""

    def __init__(self, x, xi):
        self.x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
        self.xi = np.atleast_2d(np.asarray(xi, dtype=float)).copy()
        if self.x.shape[0] == 0:
            raise ValueError("empty ensemble")
        self.t = 0.0
        self.radius = support_radius(0.0, self.xi)

    def push(self, t_new, K, max_step):
        self.x, self.xi, _ = flow(self.t, t_new, self.x, self.xi, K, max_step)
        self.t = float(t_new)
        support_radius(self.t, self.xi, self.radius)
        return self


def export_ensemble_csv(path, t, x, xi, values):
    x = np.atleast_2d(x)
    xi = np.atleast_2d(xi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "x2", "x3", "xi1", "xi2", "xi3", "f_value"])
        for n in range(x.shape[0]):
            w.writerow([f"{float(t):.17g}"] + [f"{a:.17g}" for a in x[n]] + [f"{a:.17g}" for a in xi[n]]
                       + [f"{float(values[n]):.17g}"])
