"""Fixed quadrature rules on intervals, spheres, the weighted unit disk and S^3.

All rules are deterministic; nodes come back in a fixed order so that sums
accumulated over them are reproducible run to run.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_gegenbauer


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a=-1.0, b=1.0):
    """Gauss-Legendre nodes and weights mapped to ``[a, b]``."""
    if n < 1:
        raise ValueError("quadrature order must be positive")
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def gauss_legendre_batch(n, a, b):
    """Gauss-Legendre nodes on many intervals at once.

    ``a`` and ``b`` broadcast together; the node axis is appended last.
    """
    x, w = _leggauss(int(n))
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def rotation_from_z(axis):
    """Rotation matrix taking e_z onto the unit vector along ``axis``."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.eye(3)
    a = axis / n
    z = np.array([0.0, 0.0, 1.0])
    c = float(a @ z)
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    k = np.cross(z, a)
    s = np.linalg.norm(k)
    k = k / s
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


class SphereRule:
    """Product rule on S^2: Gauss-Legendre in cos(theta) times trapezoid in azimuth.

    Parameters
    ----------
    n_polar, n_azimuth : int
        Number of nodes in cos(theta) and in azimuth.
    axis : array_like, optional
        Direction of the rule's pole (default e_z).
    mu_min : float, optional
        Restrict the polar variable to ``cos(theta) >= mu_min``; the rule then
        integrates over a spherical cap around ``axis``.
    """

    def __init__(self, n_polar=32, n_azimuth=64, axis=None, mu_min=-1.0):
        self.n_polar = int(n_polar)
        self.n_azimuth = int(n_azimuth)
        mu_min = float(np.clip(mu_min, -1.0, 1.0))
        mu, wmu = gauss_legendre(self.n_polar, mu_min, 1.0)
        phi = 2.0 * np.pi * np.arange(self.n_azimuth) / self.n_azimuth
        sin_t = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
        pts = np.empty((self.n_polar, self.n_azimuth, 3))
        pts[..., 0] = sin_t[:, None] * np.cos(phi)[None, :]
        pts[..., 1] = sin_t[:, None] * np.sin(phi)[None, :]
        pts[..., 2] = mu[:, None]
        pts = pts.reshape(-1, 3)
        if axis is not None:
            pts = pts @ rotation_from_z(axis).T
        self.points = pts
        self.weights = np.repeat(wmu * (2.0 * np.pi / self.n_azimuth), self.n_azimuth)

    def __len__(self):
        return self.weights.size

    def integrate(self, values):
        """Integrate samples taken at ``self.points`` (node axis first)."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def weighted_disk_rule(n_radial=32, n_azimuth=64):
    """Rule for the integral over |y| < 1 of g(y) / sqrt(1 - |y|^2) dy.

    The edge singularity is removed by |y| = sin(theta), which turns the
    measure into sin(theta) d theta d phi on (0, pi/2) x (0, 2 pi).
    """
    th, wth = gauss_legendre(n_radial, 0.0, 0.5 * np.pi)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    r = np.sin(th)
    pts = np.stack(
        [r[:, None] * np.cos(phi)[None, :], r[:, None] * np.sin(phi)[None, :]], axis=-1
    ).reshape(-1, 2)
    w = np.repeat(wth * np.sin(th) * (2.0 * np.pi / n_azimuth), n_azimuth)
    return pts, w


def s3_rule(n=24):
    """Product rule on the unit sphere S^3 in R^4 (total weight 2 pi^2).

    Hyperspherical angles (psi, theta, phi); cos(psi) uses Gauss-Gegenbauer
    nodes for the sin^2(psi) Jacobian.
    """
    x1, w1 = roots_gegenbauer(n, 1.0)
    mu, wmu = gauss_legendre(n)
    m = 2 * n
    phi = 2.0 * np.pi * np.arange(m) / m
    s1 = np.sqrt(1.0 - x1 * x1)
    s2 = np.sqrt(1.0 - mu * mu)
    X1, MU, PHI = np.meshgrid(x1, mu, phi, indexing="ij")
    S1, S2, _ = np.meshgrid(s1, s2, phi, indexing="ij")
    pts = np.stack(
        [X1, S1 * MU, S1 * S2 * np.cos(PHI), S1 * S2 * np.sin(PHI)], axis=-1
    ).reshape(-1, 4)
    W = (w1[:, None, None] * wmu[None, :, None] * (2.0 * np.pi / m)) * np.ones((1, 1, m))
    return pts, W.reshape(-1)
