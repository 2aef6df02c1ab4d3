"""Self-consistent mini-run: retarded potentials coupled to backward characteristics.

The state at slice ``n`` (time ``t_n = n dt``) is made of

* moments ``rho, j`` on a uniform grid, obtained by pulling ``f`` back along
  characteristics through the stored field history,
* potentials ``phi = Y * rho`` and ``A = A^0 + Y * j`` on the grid plus two
  ghost layers, from retarded sums over earlier moment slices,
* fields ``E = -d_t A - grad phi`` and ``B = curl A`` on the grid, appended to
  the history used by the characteristics.

The lag integral ``int_0^t s G(s) ds`` is sampled at the slice times, so the
weight of lag zero vanishes and the fields at ``t_n`` only involve moments at
``t_0 .. t_{n-1}``: the scheme is explicit.  Moments are interpolated in space
by quintic B-splines.
"""
import json
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from . import _hot
from ._accel import backend
from ._hot.retarded import spline_coefficients
from .fields import FOUR_PI, homogeneous_field
from .initial_data import InitialData, make_initial_data
from .kernels import velocities
from .monitor import NormSeries, continuation_report, sup_norm_estimates
from .quadrature import SphereRule, gauss_legendre
from .transport import Ensemble, GriddedFieldHistory, PhaseDensity, seed_ensemble

# backward differences of orders 1..4 (newest value first)
_BACKWARD = {
    1: np.array([1.0, -1.0]),
    2: np.array([1.5, -2.0, 0.5]),
    3: np.array([11 / 6, -3.0, 1.5, -1 / 3]),
    4: np.array([25 / 12, -4.0, 3.0, -4 / 3, 0.25]),
}
# centered sixth-order first derivative, offsets -3..3
_CENTRAL6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def lag_weights(n, dt, rule="gregory"):
    """Quadrature weights on the nodes ``0, dt, ..., n dt``.

    ``rule="gregory"`` uses closed Newton-Cotes for ``n <= 4`` and the
    fourth-order Gregory end corrections beyond; ``"trapezoid"`` is the plain
    composite rule (used to estimate the lag-quadrature error).
    """
    if n < 1:
        raise ValueError("need at least one lag interval")
    if rule == "trapezoid" or n == 1:
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
    elif rule != "gregory":
        raise ValueError(f"unknown lag rule {rule!r}")
    elif n == 2:
        w = np.array([1.0, 4.0, 1.0]) / 3.0
    elif n == 3:
        w = np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    elif n == 4:
        w = np.array([14.0, 64.0, 24.0, 64.0, 14.0]) / 45.0
    else:
        w = np.ones(n + 1)
        end = np.array([3 / 8, 7 / 6, 23 / 24])
        if n == 5:
            # corrections overlap; fall back to the composite Simpson 3/8 + Simpson pair
            w = np.array([1 / 3, 4 / 3, 1 / 3 + 3 / 8, 9 / 8, 9 / 8, 3 / 8])
        else:
            w[:3] = end
            w[-3:] = end[::-1]
    return w * dt


def momentum_box(center, radius, n, profile=None):
    """Tensor Gauss-Legendre nodes on the cube of half-width ``radius`` about ``center``, kept in the ball.

    f(t) vanishes outside this ball as long as the momentum support stays
    inside it.  When ``profile`` is given the weights are rescaled so that
    they integrate its momentum factor exactly; the discrete charge density
    at t = 0 then equals the one the initial field was built for.
    """
    center = np.asarray(center, dtype=float)
    g, w = gauss_legendre(n, -radius, radius)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).reshape(-1)
    keep = np.linalg.norm(X, axis=1) < radius
    X, W = X[keep] + center, W[keep]
    if profile is not None:
        discrete = float(np.sum(W * profile.momentum_factor(np.linalg.norm(X - center, axis=1))))
        if discrete > 0:
            W = W * (profile.momentum_mass() / discrete)
    return X, W


@dataclass
class MiniRunConfig:
    """Settings of the self-consistent run (defaults: 16^3 grid, 12^3 momenta, 20 steps to t = 0.5)."""

    profile: str = "gaussian-bump"
    amplitude: float = 0.5
    x_radius: float = 0.8
    x_power: int = 5
    xi_radius: float = 0.6
    xi_center: tuple = (0.3, 0.0, 0.0)
    n_grid: int = 16
    half_width: float = 1.5
    n_momentum: int = 12
    box_radius: Optional[float] = None
    normalize_mass: bool = True
    n_steps: int = 20
    t_final: float = 0.5
    sphere_polar: int = 12
    sphere_azimuth: int = 24
    lag_rule: str = "gregory"
    corrector_iterations: int = 1
    n_ensemble: int = 400
    seed: int = 0
    diagnostic_steps: tuple = (0.1, 0.05)
    n_diagnostic_points: int = 4
    monitor_x_stride: int = 2
    monitor_xi_stride: int = 2

    def validate(self):
        if self.n_grid < 5 or self.n_steps < 7:
            raise ValueError("mini-run needs n_grid >= 5 and n_steps >= 7")
        if self.monitor_x_stride < 1 or self.monitor_xi_stride < 1:
            raise ValueError("monitor lattice strides must be positive")
        if self.t_final <= 0 or self.half_width <= 0 or self.amplitude < 0:
            raise ValueError("t_final, half_width must be positive and amplitude nonnegative")
        return self

    @property
    def dt(self):
        return self.t_final / self.n_steps

    @property
    def h(self):
        return 2.0 * self.half_width / (self.n_grid - 1)

    def momentum_radius(self, data):
        """Half-width of the momentum box about the drift of the profile."""
        if self.box_radius is not None:
            return self.box_radius
        return 1.25 * (data.f.momentum_support - float(np.linalg.norm(data.f.xi_shift)))


@dataclass
class StepRecord:
    t: float
    f_sup: float
    max_principle_deviation: float
    support_radius: float
    box_excursion: float
    E_sup: float
    B_sup: float
    gradE_sup: float
    gradB_sup: float
    rho_total: float
    active_points: int
    active_momenta: int
    outside_flags: int
    corrector_change: float
    seconds: float


class MiniRun:
    """Explicit marching of the coupled potential / characteristic system."""

    def __init__(self, config: MiniRunConfig, data: Optional[InitialData] = None):
        self.config = config.validate()
        c = config
        if data is None:
            data = make_initial_data(c.profile, amplitude=c.amplitude, x_radius=c.x_radius, x_power=c.x_power,
                                     **({"xi_radius": c.xi_radius, "xi_center": tuple(c.xi_center)}
                                        if c.profile == "gaussian-bump" else {}))
        self.data = data
        self.dt = c.dt
        self.h = c.h
        n = c.n_grid
        self.origin = np.full(3, -c.half_width)
        axis = self.origin[0] + self.h * np.arange(n)
        self.grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        # potentials carry two ghost layers for the fourth-order stencils
        self.pot_origin = self.origin - 2 * self.h
        paxis = self.pot_origin[0] + self.h * np.arange(n + 4)
        self.pot_grid = np.stack(np.meshgrid(paxis, paxis, paxis, indexing="ij"), axis=-1)
        self.xi_center = np.asarray(data.f.xi_shift, dtype=float)
        self.box_radius = c.momentum_radius(data)
        self.xi_nodes, self.xi_weights = self._momentum_rule(c.n_momentum)
        self.sphere = SphereRule(c.sphere_polar, c.sphere_azimuth)
        # E^in is explicit, so the homogeneous part gets a finer sphere rule
        self.sphere_fine = SphereRule(24, 48)
        self.center = np.asarray(data.f.x_center, dtype=float)
        self.history = GriddedFieldHistory(self.origin, self.h, (n, n, n), self.dt)
        self.density = PhaseDensity(data.f, self.history, max_step=self.dt)
        self.moments = np.zeros((c.n_steps + 1, n, n, n, 4))
        self.coeffs = np.zeros((c.n_steps + 1, n, n, n, 4))
        self.pot_u: List[np.ndarray] = []  # (phi, A - A^0) on the ghosted grid
        self.records: List[StepRecord] = []
        self.monitor = NormSeries()
        rng = np.random.default_rng(c.seed)
        self.ensemble = Ensemble(*seed_ensemble(data.f, c.n_ensemble, rng))
        f_sup, (xs, ps) = data.f.sup
        self.f_sup = float(f_sup)
        self.tracer = Ensemble(xs[None], ps[None])
        self.step_index = 0
        self.diagnostics = None
        self._homogeneous = {}
        self._initial_factors = None

    # -- moments -------------------------------------------------------------
    def _momentum_rule(self, n):
        profile = self.data.f if self.config.normalize_mass else None
        return momentum_box(self.xi_center, self.box_radius, n, profile)

    def _active_momenta(self, t):
        radius = self.data.f.momentum_support - float(np.linalg.norm(self.xi_center))
        reach = radius + t * (self.history.max_norm() if len(self.history) else 0.0)
        return np.linalg.norm(self.xi_nodes - self.xi_center, axis=1) < reach

    def density_moments(self, t, X, xi=None, w=None):
        """``(rho, j)`` at points ``X`` (n, 3) by pulling f back through the history.

        Returns the moments, the largest f value met and the number of
        characteristics that left the grid.
        """
        xi = self.xi_nodes if xi is None else xi
        w = self.xi_weights if w is None else w
        P, Q = X.shape[0], xi.shape[0]
        if P == 0 or Q == 0:
            return np.zeros(P), np.zeros((P, 3)), 0.0, 0
        F = self.density(t, np.repeat(X, Q, axis=0), np.tile(xi, (P, 1))).reshape(P, Q)
        # a flagged characteristic matters only if it carries mass
        flags = int(np.count_nonzero(self.density.last_flags & (F.reshape(-1) != 0)))
        wf = F * w
        return wf.sum(axis=1), wf @ velocities(xi), float(F.max(initial=0.0)), flags

    def _slice_moments(self, k):
        t = k * self.dt
        c = self.config
        reach = c.x_radius + t + self.h
        G = self.grid.reshape(-1, 3)
        inside = np.linalg.norm(G - self.center, axis=1) < reach
        act = self._active_momenta(t)
        rho, j, fmax, flags = self.density_moments(t, G[inside], self.xi_nodes[act], self.xi_weights[act])
        M = np.zeros((G.shape[0], 4))
        M[inside, 0] = rho
        M[inside, 1:] = j
        n = c.n_grid
        self.moments[k] = M.reshape(n, n, n, 4)
        self.coeffs[k] = spline_coefficients(self.moments[k])
        return int(inside.sum()), int(act.sum()), fmax, flags

    # -- potentials ------------------------------------------------------------
    def retarded_potentials(self, k, X, rule=None):
        """``(phi, A - A^0)`` at time ``t_k`` and points ``X`` from moment slices ``0 .. k-1``."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        out = np.zeros((X.shape[0], 4))
        if k == 0:
            return out
        m = np.arange(1, k + 1)
        s = m * self.dt
        w = lag_weights(k, self.dt, rule or self.config.lag_rule)[1:] * s / FOUR_PI
        reach = self.config.x_radius + k * self.dt + 4 * self.h
        near = np.linalg.norm(X - self.center, axis=1) < reach
        if np.any(near) and k > 1:
            out[near] = _hot.retarded_sum(np.ascontiguousarray(X[near]), self.coeffs, self.origin, self.h,
                                          (k - m[:-1]).astype(np.int64), s[:-1], w[:-1], self.sphere.points,
                                          self.sphere.weights)
        # the t = 0 slice is known in closed form, so the initial shell skips the spline
        Y = (X[:, None, :] - s[-1] * self.sphere.points[None]).reshape(-1, 3)
        M0 = self.initial_moments(Y).reshape(X.shape[0], -1, 4)
        out += w[-1] * np.einsum("r,prc->pc", self.sphere.weights, M0)
        return out

    def initial_moments(self, Y):
        """Quadrature moments ``(rho, j)`` of ``f^in`` at arbitrary points, using separability in x and xi."""
        f = self.data.f
        mass = f.momentum_mass()
        out = np.zeros((Y.shape[0], 4))
        if mass == 0:
            return out
        if self._initial_factors is None:
            h = f.momentum_factor(np.linalg.norm(self.xi_nodes - self.xi_center, axis=1)) * self.xi_weights
            self._initial_factors = np.concatenate([[h.sum()], h @ velocities(self.xi_nodes)]) / mass
        return f.density(Y)[:, None] * self._initial_factors

    def potentials_at(self, k, X, rule=None):
        """Full ``(phi, A)`` at slice ``k``, homogeneous part included."""
        U = self.retarded_potentials(k, X, rule)
        A0 = homogeneous_field(self.data.E, k * self.dt, np.atleast_2d(X), self.sphere_fine).A0
        return U[:, 0], U[:, 1:] + A0

    # -- fields ----------------------------------------------------------------
    def _grad4(self, P):
        """Fourth-order spatial gradient on the interior of a ghosted array; axis -1 added."""
        h = self.h
        n = self.config.n_grid
        out = []
        for a in range(3):
            def sl(off):
                idx = [slice(2, 2 + n)] * 3
                idx[a] = slice(2 + off, 2 + off + n)
                return P[tuple(idx)]
            out.append((sl(-2) - 8 * sl(-1) + 8 * sl(1) - sl(2)) / (12 * h))
        return np.stack(out, axis=-1)

    def _assemble_fields(self, k):
        n = self.config.n_grid
        np4 = n + 4
        U = self.pot_u[k].reshape(np4, np4, np4, 4)
        order = min(k, 4)
        coef = _BACKWARD[order]
        dtU = sum(c * self.pot_u[k - i][..., 1:] for i, c in enumerate(coef)) / self.dt
        dtU = dtU.reshape(np4, np4, np4, 3)[2:2 + n, 2:2 + n, 2:2 + n]
        if k not in self._homogeneous:
            self._homogeneous[k] = homogeneous_field(self.data.E, k * self.dt, self.grid.reshape(-1, 3),
                                                     self.sphere_fine)
        hf = self._homogeneous[k]
        gphi = self._grad4(U[..., 0])
        gA = self._grad4(U[..., 1:])  # [..., i, c] = d_c A_i
        gA = gA + hf.grad_A0.reshape(n, n, n, 3, 3)
        E = -(hf.dtA0.reshape(n, n, n, 3) + dtU) - gphi
        B = np.stack([gA[..., 2, 1] - gA[..., 1, 2], gA[..., 0, 2] - gA[..., 2, 0], gA[..., 1, 0] - gA[..., 0, 1]],
                     axis=-1)
        return E, B

    @staticmethod
    def _grid_gradient_sup(F, h):
        return float(max(np.max(np.abs(np.gradient(F[..., c], h, axis=a))) for c in range(3) for a in range(3)))

    # -- marching --------------------------------------------------------------
    def initialize(self):
        n = self.config.n_grid
        G = self.grid.reshape(-1, 3)
        E0 = np.asarray(self.data.E(G)).reshape(n, n, n, 3)
        self.history.append(E0, np.zeros_like(E0))
        self.pot_u.append(np.zeros((self.pot_grid.reshape(-1, 3).shape[0], 4)))
        tic = time.perf_counter()
        act_pts, act_mom, fmax, flags = self._slice_moments(0)
        self._record(0, fmax, flags, act_pts, act_mom, 0.0, time.perf_counter() - tic)
        return self

    def step(self):
        k = self.step_index + 1
        if k > self.config.n_steps:
            raise RuntimeError("run already finished")
        tic = time.perf_counter()
        self.pot_u.append(self.retarded_potentials(k, self.pot_grid.reshape(-1, 3)))
        E, B = self._assemble_fields(k)
        self.history.append(E, B)
        change = 0.0
        for _ in range(self.config.corrector_iterations):
            # moments at t_k never enter the fields at t_k (zero lag weight), so the
            # corrector reproduces the predictor; the change is recorded as a check
            self.pot_u[k] = self.retarded_potentials(k, self.pot_grid.reshape(-1, 3))
            E2, B2 = self._assemble_fields(k)
            change = max(change, float(np.max(np.abs(E2 - E)) + np.max(np.abs(B2 - B))))
            self.history.replace_last(E2, B2)
        act_pts, act_mom, fmax, flags = self._slice_moments(k)
        self.ensemble.push(k * self.dt, self.history, self.dt)
        self.tracer.push(k * self.dt, self.history, self.dt)
        self.step_index = k
        self._record(k, fmax, flags, act_pts, act_mom, change, time.perf_counter() - tic)
        return self.records[-1]

    def _record(self, k, fmax, flags, act_pts, act_mom, change, seconds):
        t = k * self.dt
        F = self.history.fields[k]
        E, B = F[..., :3], F[..., 3:]
        # max principle: the maximiser transported forward keeps the value sup f^in
        f_tr = float(self.density(t, self.tracer.x, self.tracer.xi)[0])
        dev = max(abs(f_tr - self.f_sup), max(fmax - self.f_sup, 0.0))
        self.records.append(StepRecord(
            t=t, f_sup=max(fmax, f_tr), max_principle_deviation=dev,
            support_radius=self.ensemble.radius.values[-1],
            box_excursion=float(np.max(np.linalg.norm(self.ensemble.xi - self.xi_center, axis=1))),
            E_sup=float(np.max(np.linalg.norm(E, axis=-1))), B_sup=float(np.max(np.linalg.norm(B, axis=-1))),
            gradE_sup=self._grid_gradient_sup(E, self.h), gradB_sup=self._grid_gradient_sup(B, self.h),
            rho_total=float(self.moments[k][..., 0].sum() * self.h**3),
            active_points=act_pts, active_momenta=act_mom, outside_flags=flags,
            corrector_change=change, seconds=seconds))
        self.monitor.append(self._monitor_entry(k))

    def monitor_lattice(self, k):
        """Sampling lattice of the monitors: strided grid points that f can reach and active momenta."""
        c = self.config
        t = k * self.dt
        G = self.grid[::c.monitor_x_stride, ::c.monitor_x_stride, ::c.monitor_x_stride].reshape(-1, 3)
        G = G[np.linalg.norm(G - self.center, axis=1) < c.x_radius + t + self.h]
        xi = self.xi_nodes[self._active_momenta(t)][::c.monitor_xi_stride]
        return G, xi

    def _monitor_entry(self, k):
        n = self.config.n_grid
        F = self.history.fields[k]
        X, xi = self.monitor_lattice(k)
        shape = (n + 4,) * 3 + (4,)
        slices = [self.pot_u[i].reshape(shape)[2:2 + n, 2:2 + n, 2:2 + n] for i in range(max(0, k - 2), k + 1)]
        return sup_norm_estimates(k * self.dt, self.density, X, xi, F[..., :3], F[..., 3:], self.h,
                                  potential_slices=slices if k > 0 else None, dt=self.dt,
                                  Rf=self.ensemble.radius.values[-1], h_fd=1e-3)

    def run(self):
        if not self.records:
            self.initialize()
        while self.step_index < self.config.n_steps:
            self.step()
        return self

    # -- diagnostics -------------------------------------------------------------
    def diagnostic_points(self):
        rng = np.random.default_rng(self.config.seed + 1)
        d = rng.normal(size=(self.config.n_diagnostic_points, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.config.x_radius * rng.uniform(0.2, 0.8, size=d.shape[0])
        return self.center + d * r[:, None]

    def constraint_residuals(self, k, X, h, rule=None):
        """Residuals ``div B``, ``d_t phi + div A`` and ``div E - rho`` at slice ``k``.

        Time derivatives use the sixth-order centered stencil over slices
        ``k-3 .. k+3``; E and B use fourth-order spatial stencils of step
        ``h``; the outer divergences use the second-order stencil of step
        ``h``, so the residuals scale like ``h^2`` until they reach the floors
        of the retarded quadratures.
        """
        if k < 3 or k + 3 > self.step_index:
            raise ValueError("diagnostic slice needs three slices on each side")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        eye = np.eye(3) * h
        # all points where potentials are needed
        shifts_E = [np.zeros(3)] + [s * eye[a] for a in range(3) for s in (1, -1)]
        cloud = []
        for x in X:
            for d in shifts_E:
                y = x + d
                cloud.append(y)
                for a in range(3):
                    for s in (-2, -1, 1, 2):
                        cloud.append(y + s * eye[a])
        keys = {}
        for y in cloud:
            keys.setdefault(self._key(y, h), y)
        order = list(keys)
        pts = np.array([keys[kk] for kk in order])
        index = {kk: i for i, kk in enumerate(order)}
        pot = {}
        for kk in range(k - 3, k + 4):
            U = self.retarded_potentials(kk, pts, rule)
            A0 = homogeneous_field(self.data.E, kk * self.dt, pts, self.sphere_fine).A0
            pot[kk] = np.concatenate([U[:, :1], U[:, 1:] + A0, U[:, 1:]], axis=1)
        # the homogeneous part enters B through its closed-form curl, as on the grid
        gA0 = homogeneous_field(self.data.E, k * self.dt, pts, self.sphere_fine).grad_A0
        curlA0 = np.stack([gA0[:, 2, 1] - gA0[:, 1, 2], gA0[:, 0, 2] - gA0[:, 2, 0], gA0[:, 1, 0] - gA0[:, 0, 1]],
                          axis=1)

        def lookup(kk, y):
            return pot[kk][index[self._key(y, h)]][None]

        def dt_pot(y):
            return sum(c * lookup(k + o, y) for o, c in zip(range(-3, 4), _CENTRAL6) if c != 0) / self.dt

        def grad_pot(y):
            g = np.zeros((7, 3))
            for a in range(3):
                vals = [lookup(k, y + s * eye[a])[0] for s in (-2, -1, 1, 2)]
                g[:, a] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
            return g  # [component, direction]

        def EB(y):
            g = grad_pot(y)
            E = -dt_pot(y)[0, 1:4] - g[0]
            gA = g[4:]
            B = np.array([gA[2, 1] - gA[1, 2], gA[0, 2] - gA[2, 0], gA[1, 0] - gA[0, 1]])
            return E, B + curlA0[index[self._key(y, h)]]

        divB = np.zeros(X.shape[0])
        divE = np.zeros(X.shape[0])
        gauge = np.zeros(X.shape[0])
        for p, x in enumerate(X):
            for a in range(3):
                Ep, Bp = EB(x + eye[a])
                Em, Bm = EB(x - eye[a])
                divE[p] += (Ep[a] - Em[a]) / (2 * h)
                divB[p] += (Bp[a] - Bm[a]) / (2 * h)
                gauge[p] += (lookup(k, x + eye[a])[0, 1 + a] - lookup(k, x - eye[a])[0, 1 + a]) / (2 * h)
            gauge[p] += dt_pot(x)[0, 0]
        rho = self.density_moments(k * self.dt, X)[0]
        return divB, gauge, divE - rho

    @staticmethod
    def _key(y, h):
        return tuple(np.round(np.asarray(y) / h * 64).astype(np.int64).tolist())

    def spline_interpolation_gap(self, k, X):
        """``|rho - S(rho)|`` at ``X``: direct momentum quadrature against the spline the potentials see."""
        rho = self.density_moments(k * self.dt, X)[0]
        S = _hot.retarded_sum(np.ascontiguousarray(X), self.coeffs, self.origin, self.h, np.array([k], dtype=np.int64),
                              np.array([0.0]), np.array([1.0]), np.array([[0.0, 0.0, 1.0]]), np.array([1.0]))[:, 0]
        return np.abs(rho - S)

    def momentum_gap(self, k, X, n_fine=16):
        """``|rho_12 - rho_16|``-type estimate of the momentum-quadrature error of rho."""
        xi, w = self._momentum_rule(n_fine)
        fine = self.density_moments(k * self.dt, X, xi, w)[0]
        return np.abs(self.density_moments(k * self.dt, X)[0] - fine)

    def run_diagnostics(self):
        """Constraint residuals at two diagnostic steps with their error estimates."""
        k = self.step_index - 3
        X = self.diagnostic_points()
        h1, h2 = self.config.diagnostic_steps
        r1 = self.constraint_residuals(k, X, h1)
        r2 = self.constraint_residuals(k, X, h2)
        trap = self.constraint_residuals(k, X, h2, rule="trapezoid")
        names = ("divB", "gauge", "divE_minus_rho")
        out = {"t": k * self.dt, "points": X.tolist(), "steps": [h1, h2]}
        for name, a, b, c in zip(names, r1, r2, trap):
            na, nb = float(np.max(np.abs(a))), float(np.max(np.abs(b)))
            out[name] = {"coarse": na, "fine": nb, "ratio": na / nb if nb > 0 else float("inf"),
                         "lag_rule_gap": float(np.max(np.abs(b - c)))}
        ratio = (h1 / h2) ** 2
        trunc = float(np.max(np.abs(r1[2] - r2[2]))) / (ratio - 1.0)
        spline = float(np.max(self.spline_interpolation_gap(k, X)))
        mom = float(np.max(self.momentum_gap(k, X)))
        lag = out["divE_minus_rho"]["lag_rule_gap"]
        estimate = trunc + spline + mom + lag
        out["divE_minus_rho"].update({"truncation_estimate": trunc, "spline_estimate": spline,
                                      "momentum_estimate": mom, "lag_estimate": lag,
                                      "discretization_estimate": estimate,
                                      "bounded": out["divE_minus_rho"]["fine"] <= estimate})
        self.diagnostics = out
        return out

    # -- output --------------------------------------------------------------------
    def manifest(self):
        recs = [asdict(r) for r in self.records]
        for r in recs:
            r.pop("seconds")
        return {
            "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.config).items()},
            "momentum_box": {"center": self.xi_center.tolist(), "radius": self.box_radius},
            "grid_spacing": self.h,
            "dt": self.dt,
            "steps": recs,
            "max_principle_deviation": max(r.max_principle_deviation for r in self.records),
            "support_radius_max": self.ensemble.radius.r_star,
            "support_within_box": max(r.box_excursion for r in self.records) <= self.box_radius,
            "diagnostics": self.diagnostics,
            "monitor": [asdict(e) for e in self.monitor.entries],
            "continuation": continuation_report(self.monitor, self.config.t_final),
        }

    def timings(self):
        return {"backend": backend(), "seconds_per_step": [r.seconds for r in self.records]}


def run_mini(config: Optional[MiniRunConfig] = None, diagnostics=True):
    run = MiniRun(config or MiniRunConfig()).run()
    if diagnostics:
        run.run_diagnostics()
    return run


def dump_manifest(run, path):
    with open(path, "w") as fh:
        json.dump(run.manifest(), fh, indent=2, sort_keys=True, default=float)
