"""Analytic initial data: phase densities with compact support and a compatible E field.

Profiles are built from the C-infinity bump ``g(r) = exp(-r^2 / (1 - r^2))`` on
``r < 1``.  Because the spatial factor is radial about a centre, the charge
density at t = 0 is radial and Gauss' law gives the compatible field

    E(x) = Q(r) / (4 pi r^2) * e_r,   Q(r) = 4 pi int_0^r rho(s) s^2 ds.
"""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .quadrature import gauss_legendre


def bump(r):
    """``exp(-r^2 / (1 - r^2))`` for r < 1, zero beyond."""
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1.0
    r2 = np.where(inside, r * r, 0.0)
    return np.where(inside, np.exp(-r2 / np.where(inside, 1.0 - r2, 1.0)), 0.0)


def bump_prime(r):
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1.0
    r2 = np.where(inside, r * r, 0.0)
    den = np.where(inside, 1.0 - r2, 1.0)
    return np.where(inside, bump(r) * (-2.0 * r / den**2), 0.0)


def poly_bump(r, k):
    """``(1 - r^2)^k`` for r < 1, zero beyond; C^(k-1) across the edge."""
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, (1.0 - np.minimum(r * r, 1.0)) ** k, 0.0)


def poly_bump_prime(r, k):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) < 1.0, -2.0 * k * r * (1.0 - np.minimum(r * r, 1.0)) ** (k - 1), 0.0)


def _radial_mass(profile, lo, hi, n=200):
    """``4 pi int_lo^hi profile(s) s^2 ds``."""
    s, w = gauss_legendre(n, lo, hi)
    return 4.0 * np.pi * float(np.sum(w * profile(s) * s * s))


@dataclass(frozen=True)
class PhaseProfile:
    """Separable density ``A g(|x - x0| / Rx) h(xi)`` with radial ``h``.

    Subclasses set the momentum factor ``h`` and its radial derivative.  The
    spatial factor ``g`` is the smooth bump, or ``(1 - r^2)^k`` when
    ``x_power = k > 0``; the polynomial is much easier to resolve on coarse
    grids.
    """

    amplitude: float = 1.0
    x_radius: float = 0.5
    x_center: tuple = (0.0, 0.0, 0.0)
    x_power: int = 0

    # -- spatial factor --------------------------------------------------
    def spatial_factor(self, u):
        return poly_bump(u, self.x_power) if self.x_power > 0 else bump(u)

    def spatial_factor_prime(self, u):
        return poly_bump_prime(u, self.x_power) if self.x_power > 0 else bump_prime(u)

    @property
    def spatial_curvature(self):
        """``c`` in ``g(u) = 1 - c u^2 + O(u^4)``."""
        return float(self.x_power) if self.x_power > 0 else 1.0

    # -- momentum factor -------------------------------------------------
    def momentum_factor(self, p):
        raise NotImplementedError

    def momentum_factor_prime(self, p):
        raise NotImplementedError

    @property
    def momentum_support(self):
        """Largest ``|xi|`` where the momentum factor is nonzero."""
        raise NotImplementedError

    def momentum_mass(self):
        raise NotImplementedError

    @property
    def xi_shift(self):
        """Centre of the momentum factor (the mean drift of the profile)."""
        return np.zeros(3)

    # -- evaluation ------------------------------------------------------
    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float) - self.xi_shift
        r = np.linalg.norm(x - np.asarray(self.x_center), axis=-1) / self.x_radius
        return self.amplitude * self.spatial_factor(r) * self.momentum_factor(np.linalg.norm(xi, axis=-1))

    def gradient(self, x, xi):
        """``(grad_x f, grad_xi f)`` in closed form."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float) - self.xi_shift
        d = x - np.asarray(self.x_center)
        rx = np.linalg.norm(d, axis=-1)
        p = np.linalg.norm(xi, axis=-1)
        gx = self.spatial_factor(rx / self.x_radius)
        hp = self.momentum_factor(p)
        ex = d / np.where(rx > 0, rx, 1.0)[..., None]
        ep = xi / np.where(p > 0, p, 1.0)[..., None]
        dgx = self.spatial_factor_prime(rx / self.x_radius)[..., None] * ex / self.x_radius
        dhp = self.momentum_factor_prime(p)[..., None] * ep
        A = self.amplitude
        return A * dgx * hp[..., None], A * gx[..., None] * dhp

    @property
    def sup(self):
        """``sup f`` and a point where it is attained."""
        raise NotImplementedError

    def density(self, x):
        """Charge density ``int f dxi`` at t = 0."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - np.asarray(self.x_center), axis=-1)
        return self.amplitude * self.momentum_mass() * self.spatial_factor(r / self.x_radius)

    def total_mass(self):
        return self.amplitude * self.momentum_mass() * self.x_radius**3 * _radial_mass(self.spatial_factor, 0.0, 1.0)

    def compatible_field(self):
        return RadialField(self)


@dataclass(frozen=True)
class GaussianBump(PhaseProfile):
    """Compact bump in x and in xi: ``A g(|x - x0| / Rx) g(|xi - xi0| / Rxi)``.

    A nonzero ``xi_center`` gives the bump a mean drift and hence a current.
    """

    xi_radius: float = 0.6
    xi_center: tuple = (0.0, 0.0, 0.0)

    @property
    def xi_shift(self):
        return np.asarray(self.xi_center, dtype=float)

    def momentum_factor(self, p):
        return bump(np.asarray(p) / self.xi_radius)

    def momentum_factor_prime(self, p):
        return bump_prime(np.asarray(p) / self.xi_radius) / self.xi_radius

    @property
    def momentum_support(self):
        return float(np.linalg.norm(self.xi_shift)) + self.xi_radius

    def momentum_mass(self):
        return self.xi_radius**3 * _radial_mass(bump, 0.0, 1.0)

    @property
    def sup(self):
        return self.amplitude, (np.asarray(self.x_center, dtype=float), self.xi_shift.copy())


@dataclass(frozen=True)
class MomentumRing(PhaseProfile):
    """Momentum shell: ``A g(|x - x0| / Rx) g((|xi| - r0) / w)`` with ``r0 > w``."""

    shell_radius: float = 0.6
    shell_width: float = 0.2

    def __post_init__(self):
        if self.shell_radius <= self.shell_width:
            raise ValueError("ring needs shell_radius > shell_width")

    def momentum_factor(self, p):
        return bump((np.asarray(p) - self.shell_radius) / self.shell_width)

    def momentum_factor_prime(self, p):
        return bump_prime((np.asarray(p) - self.shell_radius) / self.shell_width) / self.shell_width

    @property
    def momentum_support(self):
        return self.shell_radius + self.shell_width

    def momentum_mass(self):
        return _radial_mass(self.momentum_factor, self.shell_radius - self.shell_width,
                            self.shell_radius + self.shell_width)

    @property
    def sup(self):
        return self.amplitude, (np.asarray(self.x_center, dtype=float), np.array([0.0, 0.0, self.shell_radius]))


@dataclass(frozen=True)
class ZeroData(PhaseProfile):
    amplitude: float = 0.0

    def __call__(self, x, xi):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1]))

    def gradient(self, x, xi):
        shape = np.broadcast_shapes(np.shape(x), np.shape(xi))
        return np.zeros(shape), np.zeros(shape)

    def momentum_factor(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    def momentum_factor_prime(self, p):
        return np.zeros_like(np.asarray(p, dtype=float))

    @property
    def momentum_support(self):
        return 0.0

    def momentum_mass(self):
        return 0.0

    @property
    def sup(self):
        return 0.0, (np.zeros(3), np.zeros(3))


class RadialField:
    """Electric field solving ``div E = rho`` for a radial charge density.

    ``E = q(r) (x - x0)`` with ``q = Q(r) / (4 pi r^3)``; the enclosed charge
    is integrated by Gauss-Legendre on ``[0, min(r, Rx)]``.  The curl of E
    vanishes, so together with B = 0 it is a compatible initial field.
    """

    def __init__(self, profile: PhaseProfile, n=64):
        self.profile = profile
        self.center = np.asarray(profile.x_center, dtype=float)
        self.R = profile.x_radius
        self.rho0 = profile.amplitude * profile.momentum_mass()
        self._u, self._w = gauss_legendre(n, 0.0, 1.0)
        # q is smooth on [0, Rx]; a dense cubic table replaces the per-point quadrature
        r_tab = np.linspace(0.0, self.R, 4097)
        self._table = CubicSpline(r_tab, self._q_exact(r_tab))
        self._q_out = float(self._q_exact(np.array([self.R]))[0]) * self.R**3

    def _rho(self, r):
        return self.rho0 * self.profile.spatial_factor(r / self.R)

    def _q(self, r):
        """``Q(r) / (4 pi r^3)`` from the table inside the support, exact outside."""
        r = np.asarray(r, dtype=float)
        inside = r < self.R
        return np.where(inside, self._table(np.minimum(r, self.R)), self._q_out / np.where(inside, 1.0, r) ** 3)

    def _q_exact(self, r):
        """``Q(r) / (4 pi r^3)``, finite at r = 0."""
        r = np.asarray(r, dtype=float)
        top = np.minimum(r, self.R)
        # int_0^top rho(s) s^2 ds = top^3 int_0^1 rho(top u) u^2 du
        S = top[..., None] * self._u
        inner = np.sum(self._w * self._rho(S) * self._u**2, axis=-1)
        ratio = np.where(r > 0, top / np.where(r > 0, r, 1.0), 1.0)
        return inner * ratio**3

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.center
        r = np.linalg.norm(d, axis=-1)
        return self._q(r)[..., None] * d

    def gradient(self, x):
        """``dE[..., i, j] = d_j E_i``."""
        x = np.asarray(x, dtype=float)
        d = x - self.center
        r = np.linalg.norm(d, axis=-1)
        q = self._q(r)
        # q'(r) / r = (rho - 3 q) / r^2, with the series value near 0
        small = r < 1e-3 * self.R
        rs = np.where(small, 1.0, r)
        qpr = np.where(small, -0.4 * self.profile.spatial_curvature * self.rho0 / self.R**2, (self._rho(r) - 3.0 * q) / rs**2)
        return q[..., None, None] * np.eye(3) + qpr[..., None, None] * d[..., :, None] * d[..., None, :]

    def hessian(self, x, h=1e-4):
        """``d_k d_j E_i`` by fourth-order differences of the closed-form gradient."""
        x = np.asarray(x, dtype=float)
        out = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            out.append((-self.gradient(x + 2 * e) + 8 * self.gradient(x + e)
                        - 8 * self.gradient(x - e) + self.gradient(x - 2 * e)) / (12 * h))
        return np.stack(out, axis=-1)

    def divergence(self, x):
        return np.trace(self.gradient(x), axis1=-2, axis2=-1)

    def sup_norm(self):
        """Sup of |E| along a fine radial scan (attained inside the support)."""
        r = np.linspace(0.0, 2.0 * self.R, 2001)
        return float(np.max(self._q(r) * r))

    def sup_gradient_norm(self):
        r = np.linspace(0.0, 2.0 * self.R, 2001)
        pts = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=1) + self.center
        return float(np.max(np.abs(self.gradient(pts))))


class ZeroField:
    def __call__(self, x):
        return np.zeros(np.shape(x))

    def gradient(self, x):
        return np.zeros(np.shape(x) + (3,))

    def hessian(self, x):
        return np.zeros(np.shape(x) + (3, 3))

    def divergence(self, x):
        return np.zeros(np.shape(x)[:-1])

    def sup_norm(self):
        return 0.0

    def sup_gradient_norm(self):
        return 0.0


class ConstantField(ZeroField):
    """Uniform field; divergence free, so compatible only with zero charge."""

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def __call__(self, x):
        return np.broadcast_to(self.value, np.shape(x)).copy()

    def sup_norm(self):
        return float(np.linalg.norm(self.value))


@dataclass(frozen=True)
class InitialData:
    """``f^in`` together with ``E^in`` (``B^in`` is zero in this version)."""

    f: PhaseProfile
    E: object
    B_is_zero: bool = True

    def __post_init__(self):
        if not self.B_is_zero:
            raise NotImplementedError("nonzero initial magnetic field is not supported")

    def compatibility_residual(self, x):
        """``max |div E^in - int f^in dxi|`` over the sample points ``x``."""
        x = np.asarray(x, dtype=float)
        return float(np.max(np.abs(self.E.divergence(x) - self.f.density(x))))


def make_initial_data(name, **params):
    """Named profiles: ``gaussian-bump``, ``ring`` and ``zero``."""
    if name == "gaussian-bump":
        f = GaussianBump(**params)
    elif name == "ring":
        f = MomentumRing(**params)
    elif name == "zero":
        return InitialData(ZeroData(), ZeroField())
    else:
        raise ValueError(f"unknown initial-data profile {name!r}")
    return InitialData(f, f.compatible_field())
