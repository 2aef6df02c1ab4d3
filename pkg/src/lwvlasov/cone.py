"""Quadrature against the forward fundamental solution Y of the wave operator.

In three space dimensions Y is the measure ``dsigma_t(x) / (4 pi t)`` on the
forward light cone, so a pairing with a kernel k homogeneous of degree d
reduces to ray integrals

    <k Y, phi> = 1/(4 pi) int_{S^2} k(1, w) int_0^inf s^(1+d) phi(s, s w) ds dw.

Test functions are polynomial bumps ``(1 - |p - c|^2 / R^2)^k`` with ball
support, so along each generator of the cone the integrand is a polynomial
(times a power of s) on an interval known in closed form.  The pairings below
integrate ray by ray with Gauss-Legendre nodes on those intervals, and align
the sphere rule with the support cap.
"""
from dataclasses import dataclass, field
from typing import Optional
import warnings

import numpy as np

from .kernels import ConeKernelSet, HomogeneousFunction, SubluminalVelocity, homogeneity_check
from .quadrature import SphereRule, gauss_legendre, gauss_legendre_batch, s3_rule

FOUR_PI = 4.0 * np.pi


class ReducedAccuracyWarning(UserWarning):
    """Support of a test function touches the cone vertex or the horizon."""


class QuadratureFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# plain cone rule


@dataclass
class ConeQuadrature:
    """Nodes ``(s, s w)`` on the cone of height ``horizon`` with Y-weights.

    The Y-weight of node ``(q, r)`` is ``s_q / (4 pi) * w_q * w_r`` so that the
    weights sum to ``horizon^2 / 2``.
    """

    horizon: float
    n_time: int = 16
    n_polar: int = 32
    n_azimuth: int = 64
    s: np.ndarray = field(init=False)
    ws: np.ndarray = field(init=False)
    omega: np.ndarray = field(init=False)
    womega: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError("cone horizon must be positive")
        self.s, self.ws = gauss_legendre(self.n_time, 0.0, self.horizon)
        rule = SphereRule(self.n_polar, self.n_azimuth)
        self.omega, self.womega = rule.points, rule.weights

    @property
    def points(self):
        P = np.empty((self.s.size, self.omega.shape[0], 4))
        P[..., 0] = self.s[:, None]
        P[..., 1:] = self.s[:, None, None] * self.omega[None]
        return P.reshape(-1, 4)

    @property
    def y_weights(self):
        return (self.s * self.ws / FOUR_PI)[:, None] * self.womega[None, :]

    def mass(self):
        return float(np.sum(self.y_weights))


def y_slice_mass(t, rule=None):
    """Total mass of the measure Y(t, .) (equals t)."""
    rule = rule if rule is not None else SphereRule(32, 64)
    return float(t * t / (FOUR_PI * t) * np.sum(rule.weights))


def y_convolve(g, p, n_time=16, n_polar=16, n_azimuth=32):
    """``(Y * g)(t, x) = int_0^t (t-s)/(4 pi) int_{S^2} g(s, x - (t-s) w) dw ds``.

    ``g(s, y)`` takes broadcastable arrays ``s`` (...,) and ``y`` (..., 3).
    Returns 0 for ``t <= 0``.
    """
    p = np.asarray(p, dtype=float)
    t, x = float(p[0]), p[1:]
    if t <= 0.0:
        return 0.0
    q = ConeQuadrature(t, n_time, n_polar, n_azimuth)
    # cone variable is the lag t - s
    back = q.s[:, None, None] * q.omega[None]
    lag_t = np.broadcast_to((t - q.s)[:, None], back.shape[:2])
    vals = np.asarray(g(lag_t, x - back), dtype=float)
    return float(np.sum(q.y_weights * vals))


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Polynomial bump ``amp * (1 - |p - c|^2 / R^2)^power`` on R^4."""

    __test__ = False  # not a pytest class

    center: tuple
    scale: float
    power: int = 4
    amplitude: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(4)
        object.__setattr__(self, "center", tuple(float(a) for a in c))
        if self.scale <= 0.0 or self.power < 3:
            raise ValueError("test function needs scale > 0 and power >= 3")

    @property
    def c(self):
        return np.asarray(self.center)

    def normalized(self):
        """Same bump rescaled so that its value at the origin is 1."""
        v0 = float(self.value(np.zeros(4)))
        if v0 == 0.0:
            raise ValueError("bump vanishes at the origin")
        return TestFunction(self.center, self.scale, self.power, self.amplitude / v0)

    def _q(self, P):
        d = P - self.c
        return d, np.sum(d * d, axis=-1) / self.scale**2

    def value(self, P):
        P = np.asarray(P, dtype=float)
        _, q = self._q(P)
        base = np.clip(1.0 - q, 0.0, None)
        return self.amplitude * base**self.power

    def grad(self, P):
        P = np.asarray(P, dtype=float)
        d, q = self._q(P)
        base = np.clip(1.0 - q, 0.0, None)
        dP = -self.power * base ** (self.power - 1)
        return self.amplitude * (2.0 * dP / self.scale**2)[..., None] * d

    def hess(self, P):
        P = np.asarray(P, dtype=float)
        d, q = self._q(P)
        base = np.clip(1.0 - q, 0.0, None)
        k = self.power
        dP = -k * base ** (k - 1)
        ddP = k * (k - 1) * base ** (k - 2)
        R2 = self.scale**2
        H = (4.0 * ddP / R2**2)[..., None, None] * d[..., :, None] * d[..., None, :]
        H = H + (2.0 * dP / R2)[..., None, None] * np.eye(4)
        return self.amplitude * H

    def stream(self, P, tau):
        return self.grad(P) @ tau

    def stream2(self, P, tau):
        return np.einsum("...ab,a,b->...", self.hess(P), tau, tau)

    def translated(self, shift):
        return TestFunction(tuple(self.c + np.asarray(shift, dtype=float)), self.scale, self.power, self.amplitude)

    # -- support geometry ------------------------------------------------

    def contains_origin(self):
        return float(self.c @ self.c) < self.scale**2

    def ray_interval(self, omega):
        """``[s_lo, s_hi]`` where the ray ``s -> (s, s w)``, s >= 0, meets the support.

        Empty rays come back with ``s_lo = s_hi = 0``.
        """
        c = self.c
        b = c[0] + omega @ c[1:]
        disc = b * b - 2.0 * (c @ c - self.scale**2)
        root = np.sqrt(np.clip(disc, 0.0, None))
        lo = np.clip(0.5 * (b - root), 0.0, None)
        hi = np.clip(0.5 * (b + root), 0.0, None)
        empty = disc <= 0.0
        lo = np.where(empty, 0.0, lo)
        hi = np.where(empty, 0.0, hi)
        return lo, hi

    def axis_interval(self):
        """Support of ``t -> phi(t, 0)`` intersected with t >= 0."""
        c = self.c
        disc = self.scale**2 - c[1:] @ c[1:]
        if disc <= 0.0:
            return 0.0, 0.0
        r = np.sqrt(disc)
        return max(c[0] - r, 0.0), max(c[0] + r, 0.0)

    def cap_cosine(self):
        """Smallest ``w . c_x / |c_x|`` for which a ray can meet the support."""
        c = self.c
        cx = np.linalg.norm(c[1:])
        if self.contains_origin() or cx == 0.0:
            return -1.0
        need = np.sqrt(2.0 * (c @ c - self.scale**2))
        return float(np.clip((need - c[0]) / cx, -1.0, 1.0))

    def sphere_rule(self, n_polar, n_azimuth):
        """Sphere rule whose pole points at the support, restricted to its cap."""
        axis = self.c[1:] if np.linalg.norm(self.c[1:]) > 0.0 else None
        return SphereRule(n_polar, n_azimuth, axis=axis, mu_min=self.cap_cosine())


def bump_on_axis(height, radius, power=4):
    return TestFunction((height, 0.0, 0.0, 0.0), radius, power)


# ---------------------------------------------------------------------------
# ray pairings


@dataclass
class RayOrders:
    n_polar: int = 32
    n_azimuth: int = 64
    n_ray: int = 16

    def doubled(self):
        return RayOrders(2 * self.n_polar, 2 * self.n_azimuth, 2 * self.n_ray)

    def as_tuple(self):
        return (self.n_polar, self.n_azimuth, self.n_ray)


class _RayNodes:
    """Sphere rule plus Gauss nodes on each ray's support interval."""

    def __init__(self, phi: TestFunction, orders: RayOrders, breakpoints=()):
        rule = phi.sphere_rule(orders.n_polar, orders.n_azimuth)
        self.omega = rule.points
        self.womega = rule.weights
        lo, hi = phi.ray_interval(self.omega)
        cuts = [lo, hi] + [np.full_like(lo, b) for b in breakpoints]
        edges = np.sort(np.stack([np.zeros_like(lo)] + cuts, axis=1), axis=1)
        edges = np.clip(edges, lo[:, None], hi[:, None])
        s, ws = gauss_legendre_batch(orders.n_ray, edges[:, :-1], edges[:, 1:])
        self.s = s.reshape(lo.size, -1)
        self.ws = ws.reshape(lo.size, -1)
        n_om, n_s = self.s.shape
        P = np.empty((n_om, n_s, 4))
        P[..., 0] = self.s
        P[..., 1:] = self.s[..., None] * self.omega[:, None, :]
        self.points = P
        self.cone_dirs = np.concatenate([np.ones((n_om, 1)), self.omega], axis=1)

    def ray_integral(self, values, power):
        """``int s^power values ds`` along each ray; values shaped (n_om, n_s, ...)."""
        w = self.ws * self.s**power
        return np.einsum("rs,rs...->r...", w, values)

    def sphere_integral(self, values):
        return np.tensordot(self.womega, values, axes=(0, 0)) / FOUR_PI


def y_pair(horizon, phi, orders: Optional[RayOrders] = None):
    """``<Y, phi>`` for a test function (cone truncated at ``horizon`` if given).

    A ``ReducedAccuracyWarning`` is issued when the support reaches the vertex
    or crosses the horizon, because the ray integrand is then cut off inside
    the support.
    """
    orders = orders or RayOrders()
    if not isinstance(phi, TestFunction):
        return _y_pair_callable(phi, horizon, orders)
    if phi.contains_origin():
        warnings.warn("test function support contains the cone vertex", ReducedAccuracyWarning)
    extra = ()
    if horizon is not None:
        _, hi = phi.ray_interval(phi.sphere_rule(orders.n_polar, orders.n_azimuth).points)
        if np.any(hi > horizon):
            warnings.warn("test function support crosses the horizon", ReducedAccuracyWarning)
        extra = (horizon,)
    nodes = _RayNodes(phi, orders, extra)
    vals = phi.value(nodes.points)
    if horizon is not None:
        vals = np.where(nodes.s <= horizon, vals, 0.0)
    return float(nodes.sphere_integral(nodes.ray_integral(vals, 1)))


def _y_pair_callable(phi, horizon, orders):
    if horizon is None:
        raise ValueError("a plain callable needs a finite horizon")
    q = ConeQuadrature(horizon, orders.n_ray, orders.n_polar, orders.n_azimuth)
    vals = np.asarray(phi(q.points), dtype=float).reshape(q.s.size, -1)
    return float(np.sum(q.y_weights * vals))


@dataclass(frozen=True)
class PairingReport:
    lhs: float
    rhs: float
    orders: tuple
    check: str = ""
    residual: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "residual", abs(self.lhs - self.rhs))

    @property
    def scale(self):
        return max(abs(self.lhs), abs(self.rhs), 1.0)

    def to_record(self, v=None, indices=()):
        return {
            "check": self.check,
            "v": None if v is None else [float(a) for a in np.ravel(v)],
            "indices": list(indices),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "orders": list(self.orders),
        }


def _kernel_set(v):
    return v if isinstance(v, ConeKernelSet) else ConeKernelSet(v)


def division_identity_first(v, i, phi, orders: Optional[RayOrders] = None):
    """Both sides of ``d_i Y = T(a_i^0 Y) + a_i^1 Y`` paired with ``phi``.

    ``lhs = -<Y, d_i phi>`` and ``rhs = -<a_i^0 Y, T phi> + <a_i^1 Y, phi>``.
    """
    orders = orders or RayOrders()
    k = _kernel_set(v)
    nodes = _RayNodes(phi, orders)
    A = k.a_kernels(nodes.cone_dirs)
    P = nodes.points
    lhs = -nodes.sphere_integral(nodes.ray_integral(phi.grad(P)[..., i], 1))
    t_phi = nodes.ray_integral(phi.stream(P, k.tau), 1)
    plain = nodes.ray_integral(phi.value(P), 0)
    rhs = nodes.sphere_integral(-A.a0[:, i] * t_phi + A.a1[:, i] * plain)
    return PairingReport(float(lhs), float(rhs), orders.as_tuple(), "DrvtY1")


def _second_pieces(k, phi, nodes):
    """Per-(i, j) pairings <Y, d_ij phi>, <b0 Y, T^2 phi>, <b1 Y, T phi>."""
    P = nodes.points
    B = k.b_kernels(nodes.cone_dirs)
    hess = nodes.sphere_integral(nodes.ray_integral(phi.hess(P), 1))
    t2 = nodes.ray_integral(phi.stream2(P, k.tau), 1)
    t1 = nodes.ray_integral(phi.stream(P, k.tau), 0)
    s0 = nodes.sphere_integral(B.b0 * t2[:, None, None])
    s1 = nodes.sphere_integral(B.b1 * t1[:, None, None])
    return hess, s0, s1, B.b2


def division_identity_second(v, i, j, phi, orders: Optional[RayOrders] = None, c_ij=None):
    """Both sides of the second-order division identity paired with ``phi``.

    ``lhs = <Y, d_ij phi>``; ``rhs = <b0 Y, T^2 phi> - <b1 Y, T phi> +
    <vp(b2 Y), phi> + c_ij phi(0)``.  The delta term is only needed when the
    support of ``phi`` reaches the origin; pass ``c_ij`` in that case.
    """
    orders = orders or RayOrders()
    k = _kernel_set(v)
    nodes = _RayNodes(phi, orders)
    hess, s0, s1, _ = _second_pieces(k, phi, nodes)
    vp = vp_pair(k, i, j, phi, theta=_default_theta(phi), orders=orders)
    rhs = s0[i, j] - s1[i, j] + vp
    phi0 = float(phi.value(np.zeros(4)))
    if phi0 != 0.0:
        if c_ij is None:
            raise ValueError("phi does not vanish at the origin; supply c_ij")
        rhs += c_ij * phi0
    return PairingReport(float(hess[i, j]), float(rhs), orders.as_tuple(), "DrvtY2")


def _default_theta(phi):
    lo, hi = phi.axis_interval()
    return max(0.5 * (lo + hi), 0.25 * phi.scale) if hi > 0 else 0.5 * phi.scale


def vp_pair(v, i, j, psi, theta, orders: Optional[RayOrders] = None, table=False):
    """Principal-value pairing ``<vp(b_ij^2 Y), psi>`` split at ``theta``.

    Far part: rays beyond ``theta`` with ``psi(t, t w) / (4 pi t)``; near part:
    ``(psi(t, t w) - psi(t, 0)) / (4 pi t)`` on ``(0, theta)``.  Every ray is
    cut at ``theta`` and at the support ends of both ``psi(t, t w)`` and
    ``psi(t, 0)``, so each Gauss panel sees a smooth integrand.
    """
    if theta <= 0.0:
        raise ValueError("theta must be positive")
    orders = orders or RayOrders()
    k = _kernel_set(v)
    z_lo, z_hi = psi.axis_interval()
    # rays for the near part must cover (0, theta) whenever psi(t, 0) != 0
    rule = SphereRule(orders.n_polar, orders.n_azimuth,
                      axis=psi.c[1:] if np.linalg.norm(psi.c[1:]) > 0 else None,
                      mu_min=-1.0 if z_hi > 0.0 else psi.cap_cosine())
    omega, womega = rule.points, rule.weights
    lo, hi = psi.ray_interval(omega)
    n_om = omega.shape[0]
    top = np.maximum(hi, min(theta, z_hi) if z_hi > 0 else 0.0)
    cuts = np.stack([np.zeros(n_om), lo, hi, np.full(n_om, z_lo), np.full(n_om, z_hi),
                     np.full(n_om, theta), top], axis=1)
    edges = np.sort(np.clip(cuts, 0.0, top[:, None]), axis=1)
    s, ws = gauss_legendre_batch(orders.n_ray, edges[:, :-1], edges[:, 1:])
    s = s.reshape(n_om, -1)
    ws = ws.reshape(n_om, -1)
    P = np.empty(s.shape + (4,))
    P[..., 0] = s
    P[..., 1:] = s[..., None] * omega[:, None, :]
    on_ray = psi.value(P)
    Pax = np.zeros_like(P)
    Pax[..., 0] = s
    on_axis = psi.value(Pax)
    near = s < theta
    safe_s = np.where(s > 0.0, s, 1.0)
    integrand = np.where(near, on_ray - on_axis, on_ray) / safe_s
    ray = np.sum(ws * integrand, axis=1)
    dirs = np.concatenate([np.ones((n_om, 1)), omega], axis=1)
    b2 = k.b_kernels(dirs).b2
    out = np.tensordot(womega * ray, b2, axes=(0, 0)) / FOUR_PI
    if table:
        return out
    return float(out[i, j])


def _delta_probe_functions():
    """Two distinct bumps containing the origin, normalised to phi(0) = 1."""
    a = TestFunction((0.0, 0.0, 0.0, 0.0), 1.0, 4)
    b = TestFunction((0.35, 0.2, -0.15, 0.1), 1.3, 5).normalized()
    return a, b


def delta_coefficient_table(v, phi, orders: Optional[RayOrders] = None, theta=None):
    """All 16 c_ij from one test function with ``phi(0) != 0``."""
    orders = orders or RayOrders()
    k = _kernel_set(v)
    nodes = _RayNodes(phi, orders)
    hess, s0, s1, _ = _second_pieces(k, phi, nodes)
    theta = theta if theta is not None else 0.5 * phi.scale
    vp = vp_pair(k, 0, 0, phi, theta, orders, table=True)
    phi0 = float(phi.value(np.zeros(4)))
    return (hess - s0 + s1 - vp) / phi0


@dataclass(frozen=True)
class DeltaCoefficient:
    value: np.ndarray
    spread: np.ndarray
    per_probe: tuple

    def __getitem__(self, ij):
        return self.value[ij]


def extract_delta_coefficient(v, i=None, j=None, orders: Optional[RayOrders] = None,
                              probes=None, rtol=1e-4):
    """Coefficient c_ij of the delta at the vertex in ``b_ij^2 Y - vp(b_ij^2 Y)``.

    Each probe gives ``c = (<Y, d_ij phi> - <b0 Y, T^2 phi> + <b1 Y, T phi>
    - <vp(b2 Y), phi>) / phi(0)``; the result is the probe average and the
    spread between probes is returned as an error bar.  Probes disagreeing by
    more than ``rtol`` relative to the pairing scale raise
    ``QuadratureFailure``.
    """
    probes = probes if probes is not None else _delta_probe_functions()
    k = _kernel_set(v)
    tables = [delta_coefficient_table(k, p, orders) for p in probes]
    stack = np.stack(tables)
    mean = stack.mean(axis=0)
    spread = stack.max(axis=0) - stack.min(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    if np.any(spread > rtol * scale):
        raise QuadratureFailure(f"delta coefficient probes disagree (spread {spread.max():.3e})")
    res = DeltaCoefficient(mean, spread, tuple(tables))
    if i is None:
        return res
    return float(mean[i, j])


class DeltaCoefficientTable:
    """c_ij(v) for many velocities, tabulated in |v| and rotated into place.

    The construction of c_ij commutes with spatial rotations acting jointly on
    x and v, so with ``e`` the unit vector along v

        c_00 = A(s), c_0k = B(s) e_k, c_k0 = C(s) e_k,
        c_kl = D(s) delta_kl + (E(s) - D(s)) e_k e_l,

    with s = |v|.  The five profiles are sampled by ``extract_delta_coefficient``
    at ``v = s e_3`` on Chebyshev nodes and interpolated by a Chebyshev series.
    """

    def __init__(self, v_max=0.95, n_nodes=48, orders: Optional[RayOrders] = None):
        self.v_max = float(v_max)
        # profiles are even/odd in s; fit on [-v_max, v_max] using symmetric nodes
        k = np.arange(n_nodes)
        nodes = np.cos(np.pi * (k + 0.5) / n_nodes) * self.v_max
        prof = np.empty((n_nodes, 5))
        for q, s in enumerate(nodes):
            c = extract_delta_coefficient(np.array([0.0, 0.0, s]), orders=orders).value
            prof[q] = [c[0, 0], c[0, 3], c[3, 0], c[1, 1], c[3, 3]]
        self._cheb = [np.polynomial.Chebyshev.fit(nodes, prof[:, m], n_nodes - 1,
                                                  domain=[-self.v_max, self.v_max]) for m in range(5)]

    def profiles(self, speed):
        return np.stack([c(speed) for c in self._cheb], axis=-1)

    def __call__(self, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        s = np.linalg.norm(v, axis=1)
        if np.any(s > self.v_max):
            raise ValueError("speed outside the tabulated range")
        e = np.where(s[:, None] > 0, v / np.where(s > 0, s, 1.0)[:, None], np.array([0.0, 0.0, 1.0]))
        A, B, C, D, E = self.profiles(s).T
        out = np.zeros((v.shape[0], 4, 4))
        out[:, 0, 0] = A
        out[:, 0, 1:] = B[:, None] * e
        out[:, 1:, 0] = C[:, None] * e
        out[:, 1:, 1:] = D[:, None, None] * np.eye(3) + (E - D)[:, None, None] * e[:, :, None] * e[:, None, :]
        return out


# ---------------------------------------------------------------------------
# residues


def sphere_area(N):
    from math import gamma, pi
    return 2.0 * pi ** (N / 2) / gamma(N / 2)


def residue(g: HomogeneousFunction, N, n=24, check_points=None, tol=1e-8):
    """Residue at 0 of a function homogeneous of degree ``-N`` on ``R^N \\ 0``.

    Equal to the integral of ``g`` over the unit sphere S^(N-1).  Evaluators
    whose tag is not ``-N``, or that fail a sampled homogeneity check, are
    rejected.
    """
    if g.degree != -N:
        raise ValueError(f"residue needs degree {-N}, evaluator is tagged {g.degree}")
    if check_points is None:
        rng = np.random.default_rng(12345)
        check_points = rng.normal(size=(16, N))
    if homogeneity_check(g, check_points) > tol:
        raise ValueError("evaluator is not homogeneous of its tagged degree")
    if N == 4:
        pts, w = s3_rule(n)
    elif N == 3:
        rule = SphereRule(n, 2 * n)
        pts, w = rule.points, rule.weights
    elif N == 2:
        phi = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        w = np.full(2 * n, 2.0 * np.pi / (2 * n))
    else:
        raise ValueError("residue is implemented for N = 2, 3, 4")
    vals = np.asarray(g(pts), dtype=float)
    return np.tensordot(w, vals, axes=(0, 0))


def residue_by_radial_pairing(g, N, profile=None, n_radial=48, n=24):
    """Residue from ``<g, Phi> = Res * |S^(N-1)|^-1 int Phi |x|^-N dx`` with radial Phi.

    An independent route used to cross-check ``residue``: ``<g, Phi>`` is done
    as a full N-dimensional integral in polar coordinates.
    """
    if profile is None:
        def profile(r):
            return np.where((r > 1.0) & (r < 2.0), ((r - 1.0) * (2.0 - r)) ** 4, 0.0)
    r, wr = gauss_legendre(n_radial, 1.0, 2.0)
    if N == 4:
        pts, w = s3_rule(n)
    elif N == 3:
        rule = SphereRule(n, 2 * n)
        pts, w = rule.points, rule.weights
    else:
        raise ValueError("radial pairing is implemented for N = 3, 4")
    X = r[:, None, None] * pts[None]
    vals = np.asarray(g(X.reshape(-1, N)), dtype=float).reshape(r.size, pts.shape[0], -1)
    pairing = np.einsum("r,q,rqk->k", wr * profile(r) * r ** (N - 1), w, vals)
    radial = np.sum(wr * profile(r) / r)
    out = pairing / radial
    return out[0] if out.size == 1 else out


def mean_zero_derived(v, i, m: HomogeneousFunction, rule=None):
    """Sphere integral of ``d_i m - T(m a_i^0)`` at t = 1 for m of degree -1."""
    if m.degree != -1 or m.grad is None:
        raise ValueError("m must be tagged degree -1 and carry a gradient")
    k = _kernel_set(v)
    rule = rule or SphereRule(32, 64)
    P = np.concatenate([np.ones((len(rule), 1)), rule.points], axis=1)
    A = k.a_kernels(P)
    mv = np.asarray(m(P), dtype=float)
    mg = np.asarray(m.grad(P), dtype=float)
    # T(m a_i) = (T m) a_i + m T a_i = (T m) a_i - m a_i^1
    Tm = mg @ k.tau
    integrand = mg[:, i] - (Tm * A.a0[:, i] - mv * A.a1[:, i])
    return float(rule.integrate(integrand))
