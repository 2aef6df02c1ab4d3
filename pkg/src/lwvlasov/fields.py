"""Retarded potentials, electromagnetic fields and field-derivative representations.

Per momentum ``xi`` the wave component ``u`` solves ``box u = 1_{t>=0} f`` with
zero data, so ``u = Y * (1_{t>=0} f)`` and, with ``Y`` carried by the cone,

    (k Y) * g (t, x) = int_0^t int_{S^2} s / (4 pi) k(s, s w) g(t - s, x - s w) dw ds.

The potentials are

    phi = int u dxi,    A = A^0 + int v(xi) u dxi,

with ``A^0 = -Y(t) *_x E^in`` the homogeneous part, and the fields follow from
``E = -d_t A - grad phi`` and ``B = curl A``.

Field derivatives are evaluated without differencing through the
decompositions of ``d_j Y`` and ``d_i d_j Y`` into streaming derivatives of
bounded kernels (see :mod:`lwvlasov.kernels`).  All kernels are needed only on
the cone ``|x| = t``, where the velocity cutoff equals 1, so their momentum
derivatives follow from :func:`lwvlasov.kernels.plateau_xi_jet`.
"""
import csv
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .cone import DeltaCoefficientTable, extract_delta_coefficient
from .kernels import (ConeKernelSet, CutoffProfile, plateau_xi_jet, velocities, velocity_hessian,
                      velocity_jacobian)
from .quadrature import SphereRule, gauss_legendre
from .transport import PhaseDensity, ZeroForce

FOUR_PI = 4.0 * np.pi


class MissingHistory(RuntimeError):
    """Raised when a retarded quantity needs data that was never computed."""


# ---------------------------------------------------------------------------
# momentum weights


@dataclass(frozen=True)
class MomentSpec:
    """Momentum weight ``m(xi)`` times the cutoff ``phi_c`` and its quadrature.

    Parameters
    ----------
    weight : str or callable
        ``"1"``, ``"v1"``, ``"v2"``, ``"v3"`` or a callable returning
        ``(m, grad m, hess m)`` for momenta of shape ``(n, 3)``.
    r_star : float
        ``phi_c = 1`` on ``|xi| <= r_star`` and 0 beyond ``2 r_star``.
    n_momentum : int
        Gauss-Legendre order per axis on the box ``[-2 r*, 2 r*]^3``.
    """

    weight: object = "1"
    r_star: float = 1.0
    n_momentum: int = 16

    def __post_init__(self):
        if self.r_star <= 0:
            raise ValueError("cutoff radius must be positive")
        if isinstance(self.weight, str) and self.weight not in ("1", "v1", "v2", "v3"):
            raise ValueError(f"unknown moment weight {self.weight!r}")

    def with_weight(self, weight):
        return replace(self, weight=weight)

    def cutoff(self, xi):
        """``(phi_c, grad phi_c, hess phi_c)``; C^2 quintic join on ``[r*, 2 r*]``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        r = np.linalg.norm(xi, axis=1)
        c, c1, c2, _ = CutoffProfile(self.r_star, 2.0 * self.r_star).derivatives(r)
        rs = np.where(r > 0, r, 1.0)
        e = xi / rs[:, None]
        grad = c1[:, None] * e
        proj = np.eye(3) - e[:, :, None] * e[:, None, :]
        hess = c2[:, None, None] * e[:, :, None] * e[:, None, :] + (c1 / rs)[:, None, None] * proj
        return c, grad, hess

    def raw_weight(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = xi.shape[0]
        if callable(self.weight):
            m, dm, d2m = self.weight(xi)
            return np.asarray(m, dtype=float), np.asarray(dm, dtype=float), np.asarray(d2m, dtype=float)
        if self.weight == "1":
            return np.ones(n), np.zeros((n, 3)), np.zeros((n, 3, 3))
        k = int(self.weight[1]) - 1
        return velocities(xi)[:, k], velocity_jacobian(xi)[:, k, :], velocity_hessian(xi)[:, k]

    def weight_jet(self, xi):
        """``m phi_c`` with its momentum gradient and Hessian."""
        m, dm, d2m = self.raw_weight(xi)
        c, dc, d2c = self.cutoff(xi)
        val = m * c
        grad = dm * c[:, None] + m[:, None] * dc
        hess = (d2m * c[:, None, None] + dm[:, :, None] * dc[:, None, :] + dc[:, :, None] * dm[:, None, :]
                + m[:, None, None] * d2c)
        return val, grad, hess

    def nodes(self):
        """Momentum nodes inside ``|xi| < 2 r*`` and their weights."""
        return _box_nodes(float(self.r_star), int(self.n_momentum))


@lru_cache(maxsize=16)
def _box_nodes(r_star, n):
    g, w = gauss_legendre(n, -2.0 * r_star, 2.0 * r_star)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).reshape(-1)
    keep = np.linalg.norm(X, axis=1) < 2.0 * r_star
    X, W = X[keep], W[keep]
    X.setflags(write=False)
    W.setflags(write=False)
    return X, W


def moment_densities(f, t, x, spec: MomentSpec):
    """``(rho, j)`` at points ``x`` (n, 3) by momentum quadrature of ``f(t, x, xi)``.

    ``f`` is any callable taking broadcastable ``(..., 3)`` arrays, such as a
    :class:`~lwvlasov.transport.PhaseDensity`.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi, w = spec.nodes()
    c = spec.cutoff(xi)[0]
    v = velocities(xi)
    P, Q = x.shape[0], xi.shape[0]
    X = np.repeat(x, Q, axis=0)
    Xi = np.tile(xi, (P, 1))
    F = np.asarray(f(t, X, Xi), dtype=float).reshape(P, Q)
    wf = F * (w * c)
    return wf.sum(axis=1), wf @ v


# ---------------------------------------------------------------------------
# homogeneous part


class HomogeneousField(NamedTuple):
    A0: np.ndarray
    dtA0: np.ndarray
    grad_A0: np.ndarray  # grad_A0[..., i, c] = d_c A0_i

    @property
    def curl_A0(self):
        g = self.grad_A0
        return np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]],
                        axis=-1)


def homogeneous_field(E_in, t, x, rule: Optional[SphereRule] = None, B_in=None, chunk_points=20000):
    """``A^0 = -(t / 4 pi) int E^in(x - t w) dw`` with its time and space derivatives.

    ``E_in`` must provide ``__call__`` and ``gradient`` (``dE[..., i, c] = d_c E_i``).
    A nonzero initial magnetic field is not supported.
    """
    if B_in is not None and np.any(np.asarray(B_in) != 0):
        raise NotImplementedError("nonzero initial magnetic field is not supported")
    if t < 0:
        raise ValueError("homogeneous field is defined for t >= 0")
    rule = rule if rule is not None else SphereRule(32, 64)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = rule.weights / FOUR_PI
    n, R = x.shape[0], rule.points.shape[0]
    mean_E = np.empty((n, 3))
    mean_dE = np.empty((n, 3, 3))
    radial = np.empty((n, 3))
    rows = max(1, chunk_points // R)
    for a in range(0, n, rows):
        Y = (x[a:a + rows, None, :] - t * rule.points[None]).reshape(-1, 3)
        m = min(rows, n - a)
        E = np.asarray(E_in(Y)).reshape(m, R, 3)
        dE = np.asarray(E_in.gradient(Y)).reshape(m, R, 3, 3)
        mean_E[a:a + m] = np.einsum("r,nri->ni", w, E)
        mean_dE[a:a + m] = np.einsum("r,nric->nic", w, dE)
        radial[a:a + m] = np.einsum("r,nric,rc->ni", w, dE, rule.points)
    return HomogeneousField(-t * mean_E, -mean_E + t * radial, -t * mean_dE)


# ---------------------------------------------------------------------------
# force derivatives


class ForceJet(NamedTuple):
    K: np.ndarray
    TK: np.ndarray      # d_t K + v . grad_x K
    dK_dxi: np.ndarray  # [n, a, b] = d_{xi_b} K_a
    dK_dx: np.ndarray   # [n, a, c] = d_{x_c} K_a


def _d4(func, h):
    return (-func(2 * h) + 8 * func(h) - 8 * func(-h) + func(-2 * h)) / (12 * h)


def force_jet(K, t, x, xi, h=1e-3):
    """``K`` with its streaming derivative and first derivatives by fourth-order differences."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    t = np.asarray(t, dtype=float)
    K0 = np.asarray(K(t, x, xi), dtype=float)
    n = x.shape[0]
    dxi = np.empty((n, 3, 3))
    dx = np.empty((n, 3, 3))
    for b in range(3):
        e = np.zeros(3)
        e[b] = 1.0
        dxi[:, :, b] = _d4(lambda d: K(t, x, xi + d * e), h)
        dx[:, :, b] = _d4(lambda d: K(t, x + d * e, xi), h)
    dt = _d4(lambda d: K(t + d, x, xi), h)
    TK = dt + np.einsum("nac,nc->na", dx, velocities(xi))
    return ForceJet(K0, TK, dxi, dx)


def divergence_xi(K, t, x, xi, h=1e-3):
    """``div_xi K`` and the force scale ``max |K|`` over the sample points."""
    J = force_jet(K, t, x, xi, h)
    return np.trace(J.dK_dxi, axis1=1, axis2=2), float(np.max(np.linalg.norm(J.K, axis=1), initial=0.0))


def lorentz_force(E, B, xi):
    """``K = -(E + v(xi) x B)`` for broadcastable arrays."""
    v = velocities(np.asarray(xi, dtype=float))
    return -(np.asarray(E) + np.cross(v, np.asarray(B)))


def lorentz_force_from_potentials(dt_A0, curl_A0, dU1, dUv, xi):
    """``K`` assembled from potential derivatives.

    ``dU1[c]`` holds ``d_c int u dxi`` (c = 0..3) and ``dUv[k, c]`` holds
    ``d_c int v_k u dxi``:

        K = d_t A^0 - v x curl A^0 + d_t int v u + grad int u - v x curl int v u.
    """
    v = velocities(np.asarray(xi, dtype=float))
    dUv = np.asarray(dUv)
    curl_v = np.array([dUv[2, 2] - dUv[1, 3], dUv[0, 3] - dUv[2, 1], dUv[1, 1] - dUv[0, 2]])
    return (np.asarray(dt_A0) - np.cross(v, curl_A0) + dUv[:, 0] + np.asarray(dU1)[1:]
            - np.cross(v, curl_v))


# ---------------------------------------------------------------------------
# sphere kernel data


@lru_cache(maxsize=4)
def delta_table(v_max=0.95, n_nodes=48):
    """Shared tabulation of the delta coefficients ``c_ij(v)``."""
    return DeltaCoefficientTable(v_max=v_max, n_nodes=n_nodes)


def delta_coefficients(v, table=None):
    """``c_ij(v)`` for velocities ``v`` (n, 3); speeds past the table use direct extraction."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    table = table if table is not None else delta_table()
    s = np.linalg.norm(v, axis=1)
    out = np.empty((v.shape[0], 4, 4))
    inside = s <= table.v_max
    if np.any(inside):
        out[inside] = table(v[inside])
    for n in np.flatnonzero(~inside):
        out[n] = extract_delta_coefficient(v[n]).value
    return out


class _SphereKernels:
    """Kernels at ``(1, w)`` for a batch of momenta, with momentum derivatives."""

    def __init__(self, xi, omega):
        Q, R = xi.shape[0], omega.shape[0]
        self.v = velocities(xi)
        self.J = velocity_jacobian(xi)
        self.H = velocity_hessian(xi)
        P = np.concatenate([np.ones((R, 1)), omega], axis=1)
        pj = plateau_xi_jet(np.tile(P, (Q, 1)), np.repeat(self.v, R, axis=0))
        self.a0 = pj.a0.reshape(Q, R, 4)
        self.da0 = pj.da0.reshape(Q, R, 4, 4)
        self.a1 = pj.a1.reshape(Q, R, 4)
        self.dv_a0 = pj.dv_a0.reshape(Q, R, 4, 3)
        self.dv2_a0 = pj.dv2_a0.reshape(Q, R, 4, 3, 3)
        self.dv_da0 = pj.dv_da0.reshape(Q, R, 4, 4, 3)
        self.dv_a1 = pj.dv_a1.reshape(Q, R, 4, 3)
        self._P = P
        self._b2 = None

    def to_xi(self, dv):
        """Chain rule ``d_xi_b = sum_l d_v_l J[l, b]`` on the last axis."""
        return np.einsum("qr...l,qlb->qr...b", dv, self.J)

    def b0(self, i, j):
        a0, dv, dv2 = self.a0, self.dv_a0, self.dv2_a0
        val = a0[..., i] * a0[..., j]
        dval = dv[..., i, :] * a0[..., j, None] + a0[..., i, None] * dv[..., j, :]
        d2val = (dv2[..., i, :, :] * a0[..., j, None, None] + a0[..., i, None, None] * dv2[..., j, :, :]
                 + dv[..., i, :, None] * dv[..., j, None, :] + dv[..., j, :, None] * dv[..., i, None, :])
        grad = self.to_xi(dval)
        hess = (np.einsum("qrlm,qla,qmb->qrab", d2val, self.J, self.J)
                + np.einsum("qrl,qlab->qrab", dval, self.H))
        return val, grad, hess

    def b1(self, i, j):
        a0, a1, dv0, dv1 = self.a0, self.a1, self.dv_a0, self.dv_a1
        val = self.da0[..., j, i] + a1[..., i] * a0[..., j] + 2.0 * a0[..., i] * a1[..., j]
        dval = (self.dv_da0[..., j, i, :] + dv1[..., i, :] * a0[..., j, None] + a1[..., i, None] * dv0[..., j, :]
                + 2.0 * dv0[..., i, :] * a1[..., j, None] + 2.0 * a0[..., i, None] * dv1[..., j, :])
        return val, self.to_xi(dval)

    def b2(self, i, j):
        if self._b2 is None:
            self._b2 = np.stack([ConeKernelSet(v).b_kernels(self._P).b2 for v in self.v])
        return self._b2[..., i, j]

    def streamed_b0(self, i, j):
        """``b0 a_l`` (degree 0) and ``d_l b0 - T(b0 a_l)`` (degree -1) for l = 1..3."""
        a0, a1, da0 = self.a0, self.a1, self.da0
        b0 = a0[..., i] * a0[..., j]
        prod = b0[..., None] * a0[..., 1:]
        d_b0 = da0[..., i, 1:] * a0[..., j, None] + a0[..., i, None] * da0[..., j, 1:]
        T_prod = -(a1[..., i] * a0[..., j])[..., None] * a0[..., 1:] \
            - (a0[..., i] * a1[..., j])[..., None] * a0[..., 1:] - b0[..., None] * a1[..., 1:]
        return prod, d_b0 - T_prod


# ---------------------------------------------------------------------------
# retarded engine for prescribed densities


class FirstDerivative(NamedTuple):
    total: float
    force_term: float
    kernel_term: float
    initial_term: float


class SecondDerivative(NamedTuple):
    S1: float
    S2: float
    S3: float
    total: float
    parts: dict


class PotentialState(NamedTuple):
    phi: np.ndarray
    A: np.ndarray
    A0: np.ndarray


class RetardedFieldEngine:
    """Retarded potentials and field derivatives of a phase density given for all times.

    Parameters
    ----------
    f_in : PhaseProfile
        Initial density with closed-form gradient.
    density : PhaseDensity
        ``f(t, x, xi)``; its ``force`` is the ``K`` entering the derivative
        representations (``ZeroForce`` gives free streaming).
    spec : MomentSpec
        Cutoff radius and momentum quadrature shared by all moments.
    E_in : callable, optional
        Initial electric field for the homogeneous part of ``A``.
    n_time, n_polar, n_azimuth : int
        Cone quadrature: Gauss-Legendre in the lag, product rule on the sphere.
    """

    def __init__(self, f_in, density: PhaseDensity, spec: MomentSpec, E_in=None, n_time=16, n_polar=16,
                 n_azimuth=32, chunk_points=150_000, delta=None):
        self.f_in = f_in
        self.density = density
        self.spec = spec
        self.E_in = E_in
        self.n_time = int(n_time)
        self.rule = SphereRule(n_polar, n_azimuth)
        self.chunk_points = int(chunk_points)
        self._delta = delta
        self.free = isinstance(density.force, ZeroForce)

    # -- helpers -----------------------------------------------------------
    def _check(self, t):
        if not t > 0:
            raise MissingHistory("retarded quantities need t > 0")

    def _lags(self, a, b):
        s, ws = gauss_legendre(self.n_time, a, b)
        return s, ws

    def _chunks(self, nq, per_node):
        size = max(1, self.chunk_points // max(per_node, 1))
        for start in range(0, nq, size):
            yield slice(start, min(nq, start + size))

    def _retarded(self, t, x, xi, s):
        """Retarded points ``(t - s, x - s w, xi)`` as flat arrays ordered (q, s, r)."""
        om = self.rule.points
        Q, S, R = xi.shape[0], s.size, om.shape[0]
        T = np.broadcast_to((t - s)[None, :, None], (Q, S, R)).reshape(-1)
        X = np.broadcast_to((x[None, None, :] - s[:, None, None] * om[None])[None], (Q, S, R, 3)).reshape(-1, 3)
        Xi = np.broadcast_to(xi[:, None, None, :], (Q, S, R, 3)).reshape(-1, 3)
        return T, X, Xi

    def _f(self, T, X, Xi, shape):
        return np.asarray(self.density(T, X, Xi)).reshape(shape)

    def _active(self, spec, t):
        """Momentum nodes that f can reach on the backward cone of time ``t``.

        Momenta move by at most ``t sup|K|``, so nodes farther than that from
        the support of ``f^in`` carry no density and are dropped.
        """
        xi, w = spec.nodes()
        support = getattr(self.f_in, "momentum_support", None)
        if support is None:
            return xi, w
        if self.free:
            reach = support
        elif hasattr(self.density.force, "max_norm"):
            reach = support + t * self.density.force.max_norm()
        else:
            return xi, w
        keep = np.linalg.norm(xi, axis=1) < reach
        return xi[keep], w[keep]

    # -- potentials ---------------------------------------------------------
    def weighted_potential(self, spec: MomentSpec, t, x):
        """``int m u dxi`` at points ``x`` (n, 3) by cone quadrature inside momentum quadrature."""
        self._check(t)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi, wq = self._active(spec, t)
        s, ws = self._lags(0.0, t)
        W = (s * ws / FOUR_PI)[:, None] * self.rule.weights[None, :]
        m = spec.weight_jet(xi)[0] * wq
        out = np.zeros(x.shape[0])
        per = s.size * self.rule.weights.size
        for p in range(x.shape[0]):
            for sl in self._chunks(xi.shape[0], per):
                T, X, Xi = self._retarded(t, x[p], xi[sl], s)
                F = self._f(T, X, Xi, (-1, s.size, self.rule.weights.size))
                out[p] += np.einsum("q,sr,qsr->", m[sl], W, F)
        return out

    def potentials(self, t, x):
        """``phi`` and ``A = A^0 + int v u`` at points ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phi = self.weighted_potential(self.spec.with_weight("1"), t, x)
        Au = np.stack([self.weighted_potential(self.spec.with_weight(f"v{k}"), t, x) for k in (1, 2, 3)], axis=1)
        A0 = homogeneous_field(self.E_in, t, x).A0 if self.E_in is not None else np.zeros_like(x)
        return PotentialState(phi, A0 + Au, A0)

    def potential_function(self):
        """``(t, X) -> (phi, A)`` for use with :func:`fields`."""
        def pot(t, X):
            st = self.potentials(t, X)
            return st.phi, st.A
        return pot

    # -- first derivatives ----------------------------------------------------
    def field_derivative_first(self, m: MomentSpec, j, t, x):
        """``d_j int m u dxi`` (j = 0 is time) from the first-order decomposition.

        The three contributions are the force term
        ``-(grad_xi(m a_j^0) Y) * (K f)``, the kernel term ``(m a_j^1 Y) * f``
        and the initial-data term ``m (a_j^0 Y)(t) *_x f^in``.
        """
        self._check(t)
        if j not in (0, 1, 2, 3):
            raise ValueError("direction must be 0..3")
        x = np.asarray(x, dtype=float)
        xi, wq = self._active(m, t)
        s, ws = self._lags(0.0, t)
        om, wo = self.rule.points, self.rule.weights
        W = (s * ws / FOUR_PI)[:, None] * wo[None, :]
        terms = np.zeros(3)
        for sl in self._chunks(xi.shape[0], s.size * wo.size):
            q = xi[sl]
            mv, dm, _ = m.weight_jet(q)
            mv, dm = mv * wq[sl], dm * wq[sl, None]
            ker = _SphereKernels(q, om)
            T, X, Xi = self._retarded(t, x, q, s)
            F = self._f(T, X, Xi, (q.shape[0], s.size, wo.size))
            a0j, a1j = ker.a0[..., j], ker.a1[..., j]
            terms[1] += np.einsum("q,sr,qr,qsr->", mv, W / s[:, None], a1j, F)
            Fin = self.f_in(x[None, None, :] - t * om[None], q[:, None, :])
            terms[2] += t / FOUR_PI * np.einsum("q,r,qr,qr->", mv, wo, a0j, Fin)
            if not self.free:
                K = np.asarray(self.density.force(T, X, Xi)).reshape(q.shape[0], s.size, wo.size, 3)
                G = dm[:, None, :] * a0j[..., None] + mv[:, None, None] * ker.to_xi(ker.dv_a0[..., j, :])
                terms[0] -= np.einsum("sr,qrb,qsrb,qsr->", W, G, K, F)
        return FirstDerivative(float(terms.sum()), float(terms[0]), float(terms[1]), float(terms[2]))

    # -- second derivatives ---------------------------------------------------
    def _delta_coeffs(self, v):
        return delta_coefficients(v, self._delta)

    def field_derivative_second(self, m: MomentSpec, i, j, t, x, grad_f_norm, s14="expanded", theta=None):
        """``d_i d_j int m u dxi`` as ``S1 + S2 + S3``.

        ``S1`` collects the four pieces of the ``T^2`` expansion (initial
        layer, double divergence, single divergence and the commutator of
        ``T`` with ``div_xi``).  ``s14`` selects how the commutator piece is
        evaluated: ``"expanded"`` rewrites ``grad_x(b^0 Y)`` with the
        first-order decomposition, ``"direct"`` keeps ``grad_x(K f)``.  ``S2``
        comes from ``b^1`` and ``S3`` is the delta coefficient plus the
        principal value split at ``theta = min(1 / grad_f_norm, t)``.
        """
        self._check(t)
        if not grad_f_norm > 0:
            raise ValueError("grad_f_norm must be positive")
        if s14 not in ("expanded", "direct"):
            raise ValueError("s14 must be 'expanded' or 'direct'")
        if i not in (0, 1, 2, 3) or j not in (0, 1, 2, 3):
            raise ValueError("indices must be 0..3")
        x = np.asarray(x, dtype=float)
        theta = min(1.0 / grad_f_norm, t) if theta is None else float(theta)
        if not 0 < theta <= t:
            raise ValueError("theta must lie in (0, t]")
        xi, wq = self._active(m, t)
        om, wo = self.rule.points, self.rule.weights
        R = wo.size
        s, ws = self._lags(0.0, t)
        W = (s * ws / FOUR_PI)[:, None] * wo[None, :]
        s_far, w_far = self._lags(theta, t) if theta < t else (np.zeros(0), np.zeros(0))
        s_near, w_near = self._lags(0.0, theta)
        parts = dict.fromkeys(["S11", "S12", "S13", "S14", "S2_force", "S2_initial", "S3_delta", "S3_vp"], 0.0)
        Y = x[None, :] - t * om
        for sl in self._chunks(xi.shape[0], (s.size + s_far.size + 2 * s_near.size) * R):
            q = xi[sl]
            nq = q.shape[0]
            mv, dm, d2m = m.weight_jet(q)
            wts = wq[sl]
            ker = _SphereKernels(q, om)
            b0, gb0, hb0 = ker.b0(i, j)
            b1, gb1 = ker.b1(i, j)
            b2 = ker.b2(i, j)
            # initial layer on the sphere |y| = t at time 0
            Yq = np.broadcast_to(Y[None], (nq, R, 3)).reshape(-1, 3)
            Pq = np.repeat(q, R, axis=0)
            Fin = self.f_in(Yq, Pq).reshape(nq, R)
            gx_in, gp_in = (g.reshape(nq, R, 3) for g in self.f_in.gradient(Yq, Pq))
            v = ker.v
            layer = np.einsum("qrc,qc->qr", gx_in, v)
            if not self.free:
                K_in = np.asarray(self.density.force(np.zeros(nq * R), Yq, Pq)).reshape(nq, R, 3)
                layer = layer + np.einsum("qrb,qrb->qr", K_in, gp_in)
            radial = np.einsum("qrc,rc->qr", gx_in, om)
            mw = mv * wts
            parts["S11"] += (t / FOUR_PI * np.einsum("q,r,qr,qr->", mw, wo, b0, layer)
                             + np.einsum("q,r,qr,qr->", mw, wo, b0, Fin) / FOUR_PI
                             - t / FOUR_PI * np.einsum("q,r,qr,qr->", mw, wo, b0, radial))
            parts["S2_initial"] += np.einsum("q,r,qr,qr->", mw, wo, b1, Fin) / FOUR_PI
            # delta coefficient and principal value
            c_ij = self._delta_coeffs(v)[:, i, j]
            f_here = np.asarray(self.density(np.full(nq, t), np.broadcast_to(x, (nq, 3)), q))
            parts["S3_delta"] += float(np.sum(mw * c_ij * f_here))
            if s_far.size:
                T, X, Xi = self._retarded(t, x, q, s_far)
                Ff = self._f(T, X, Xi, (nq, s_far.size, R))
                Wf = (w_far / (FOUR_PI * s_far))[:, None] * wo[None, :]
                parts["S3_vp"] += np.einsum("q,sr,qr,qsr->", mw, Wf, b2, Ff)
            T, X, Xi = self._retarded(t, x, q, s_near)
            Fn = self._f(T, X, Xi, (nq, s_near.size, R))
            Tn = np.broadcast_to((t - s_near)[None, :], (nq, s_near.size)).reshape(-1)
            Xn = np.broadcast_to(x, (nq * s_near.size, 3))
            Fa = np.asarray(self.density(Tn, Xn, np.repeat(q, s_near.size, axis=0))).reshape(nq, s_near.size)
            Wn = (w_near / (FOUR_PI * s_near))[:, None] * wo[None, :]
            parts["S3_vp"] += np.einsum("q,sr,qr,qsr->", mw, Wn, b2, Fn - Fa[:, :, None])
            if self.free:
                continue
            # force terms over the whole cone
            T, X, Xi = self._retarded(t, x, q, s)
            shp = (nq, s.size, R)
            F = self._f(T, X, Xi, shp)
            jet = force_jet(self.density.force, T, X, Xi)
            K = jet.K.reshape(shp + (3,))
            TK = jet.TK.reshape(shp + (3,))
            dKxi = jet.dK_dxi.reshape(shp + (3, 3))
            dKx = jet.dK_dx.reshape(shp + (3, 3))
            Wq = W[None] * wts[:, None, None]
            M1 = dm[:, None, :] * b0[..., None] + mv[:, None, None] * gb0
            M2 = (d2m[:, None] * b0[..., None, None] + dm[:, None, :, None] * gb0[..., None, :]
                  + gb0[..., :, None] * dm[:, None, None, :] + mv[:, None, None, None] * hb0)
            parts["S12"] += np.einsum("qsr,qrab,qsra,qsrb,qsr->", Wq, M2, K, K, F)
            KgK = np.einsum("qsrab,qsrb->qsra", dKxi, K)
            parts["S13"] -= np.einsum("qsr,qra,qsra,qsr->", Wq, M1, TK - KgK, F)
            N1 = dm[:, None, :] * b1[..., None] + mv[:, None, None] * gb1
            parts["S2_force"] -= np.einsum("qsr,s,qra,qsra,qsr->", Wq, 1.0 / s, N1, K, F)
            gx, gp = self.density.gradient(T, X, Xi)
            gx = gx.reshape(shp + (3,))
            gp = gp.reshape(shp + (3,))
            mJ = (mw)[:, None, None] * ker.J  # [q, l, b]
            if s14 == "direct":
                dKf = dKx * F[..., None, None] + K[..., :, None] * gx[..., None, :]  # [.., b, l]
                parts["S14"] -= np.einsum("qlb,sr,qr,qsrbl->", mJ, W, b0, dKf)
            else:
                prod, rest = ker.streamed_b0(i, j)  # [q, r, l]
                Tf = np.einsum("qsrb,qsrb->qsr", K, gp)
                TKf = TK * F[..., None] + K * Tf[..., None]
                parts["S14"] -= np.einsum("qlb,sr,qrl,qsrb->", mJ, W, prod, TKf)
                parts["S14"] -= np.einsum("qlb,sr,s,qrl,qsrb->", mJ, W, 1.0 / s, rest, K * F[..., None])
                parts["S14"] -= t / FOUR_PI * np.einsum("qlb,r,qrl,qrb,qr->", mJ, wo, prod, K_in, Fin)
        S1 = parts["S11"] + parts["S12"] + parts["S13"] + parts["S14"]
        S2 = parts["S2_force"] + parts["S2_initial"]
        S3 = parts["S3_delta"] + parts["S3_vp"]
        parts["theta"] = theta
        return SecondDerivative(float(S1), float(S2), float(S3), float(S1 + S2 + S3),
                                {k: float(val) for k, val in parts.items()})

    # -- force --------------------------------------------------------------
    def lorentz_force(self, t, x, xi, path="potentials", h=0.05):
        """``K`` at ``(t, x, xi)`` either from the first-derivative representation of
        the potential moments (``"potentials"``) or from finite-difference fields
        (``"fields"``)."""
        x = np.asarray(x, dtype=float)
        if path == "fields":
            st = fields(self.potential_function(), t, x[None], h)
            return lorentz_force(st.E[0], st.B[0], xi)
        if path != "potentials":
            raise ValueError("path must be 'potentials' or 'fields'")
        dU1 = np.array([self.field_derivative_first(self.spec.with_weight("1"), c, t, x).total for c in range(4)])
        dUv = np.array([[self.field_derivative_first(self.spec.with_weight(f"v{k}"), c, t, x).total
                         for c in range(4)] for k in (1, 2, 3)])
        if self.E_in is not None:
            hf = homogeneous_field(self.E_in, t, x[None])
            dtA0, curlA0 = hf.dtA0[0], hf.curl_A0[0]
        else:
            dtA0 = curlA0 = np.zeros(3)
        return lorentz_force_from_potentials(dtA0, curlA0, dU1, dUv, xi)


# ---------------------------------------------------------------------------
# finite-difference oracles and fields


_C4 = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))
_C2 = ((-1, -0.5), (1, 0.5))


def fd_first(func, p, j, h, order=4):
    """Centered difference of ``func(p)`` along spacetime axis ``j``."""
    p = np.asarray(p, dtype=float)
    e = np.zeros(p.size)
    e[j] = h
    coeffs = _C4 if order == 4 else _C2
    return sum(c * func(p + k * e) for k, c in coeffs) / h


def fd_second(func, p, i, j, h):
    """Fourth-order second difference along spacetime axes ``i`` and ``j``."""
    p = np.asarray(p, dtype=float)
    if i == j:
        e = np.zeros(p.size)
        e[i] = h
        return (-func(p + 2 * e) + 16 * func(p + e) - 30 * func(p) + 16 * func(p - e) - func(p - 2 * e)) / (12 * h * h)
    return fd_first(lambda q: fd_first(func, q, j, h), p, i, h)


class FieldState(NamedTuple):
    t: float
    x: np.ndarray
    E: np.ndarray
    B: np.ndarray
    divE_minus_rho: np.ndarray
    divB: np.ndarray
    gauge_residual: np.ndarray
    faraday_residual: np.ndarray
    h: float


def fields(potential, t, x, h, rho=None, t_min=0.0, div_order=2):
    """Fields and constraint residuals by centered differences of the potentials.

    ``potential(t, X)`` returns ``(phi, A)`` for points ``X`` (n, 3).  E and B
    use fourth-order stencils of step ``h``; the divergence, gauge and
    Faraday residuals apply a stencil of order ``div_order`` (step ``h``) to
    them, so the residuals shrink like ``h^div_order``.  ``rho(t, X)`` supplies
    the charge density for ``div E - rho``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if t - 2 * h - (h if div_order else 0) < t_min:
        raise ValueError("stencil leaves the computed time range")
    outer = _C2 if div_order == 2 else _C4
    cache = {}
    requests = {}

    def pot(tt, X):
        # first pass records the stencil, second pass reads the batched values
        key = round(tt / h * 4)  # stencil times differ from t by multiples of h / 4
        if requests is not None:
            for n in range(X.shape[0]):
                requests.setdefault(key, (tt, {}))[1][X[n].tobytes()] = X[n]
            return np.zeros(X.shape[0]), np.zeros((X.shape[0], 3))
        vals = [cache[(key, X[n].tobytes())] for n in range(X.shape[0])]
        return np.array([a for a, _ in vals]), np.array([b for _, b in vals])

    def grad_pot(tt, X):
        """``d_c phi`` and ``d_c A_i`` (c = 0..3) with fourth-order stencils."""
        gphi = np.zeros((X.shape[0], 4))
        gA = np.zeros((X.shape[0], 3, 4))
        for k, c in _C4:
            phi, A = pot(tt + k * h, X)
            gphi[:, 0] += c * phi / h
            gA[:, :, 0] += c * A / h
            for a in range(3):
                e = np.zeros(3)
                e[a] = k * h
                phi, A = pot(tt, X + e)
                gphi[:, a + 1] += c * phi / h
                gA[:, :, a + 1] += c * A / h
        return gphi, gA

    def eb(tt, X):
        gphi, gA = grad_pot(tt, X)
        E = -gA[:, :, 0] - gphi[:, 1:]
        B = np.stack([gA[:, 2, 2] - gA[:, 1, 3], gA[:, 0, 3] - gA[:, 2, 1], gA[:, 1, 1] - gA[:, 0, 2]], axis=1)
        return E, B

    def assemble():
        E, B = eb(t, x)
        divE = np.zeros(x.shape[0])
        divB = np.zeros(x.shape[0])
        divA = np.zeros(x.shape[0])
        curlE = np.zeros_like(x)
        dtB = np.zeros_like(x)
        dtphi = np.zeros(x.shape[0])
        for k, c in outer:
            Et, Bt = eb(t + k * h, x)
            dtB += c * Bt / h
            phi_t, _ = pot(t + k * h, x)
            dtphi += c * phi_t / h
            for a in range(3):
                e = np.zeros(3)
                e[a] = k * h
                Ea, Ba = eb(t, x + e)
                _, Aa = pot(t, x + e)
                divE += c * Ea[:, a] / h
                divB += c * Ba[:, a] / h
                divA += c * Aa[:, a] / h
                # curl E_i = eps_iab d_a E_b
                curlE[:, (a + 1) % 3] -= c * Ea[:, (a + 2) % 3] / h
                curlE[:, (a + 2) % 3] += c * Ea[:, (a + 1) % 3] / h
        return E, B, divE, divB, divA, curlE, dtB, dtphi

    assemble()
    for key, (tt, pts) in requests.items():
        keys = list(pts)
        phi, A = potential(tt, np.array([pts[k] for k in keys]))
        for n, k in enumerate(keys):
            cache[(key, k)] = (phi[n], A[n])
    requests = None
    E, B, divE, divB, divA, curlE, dtB, dtphi = assemble()
    rho_val = np.asarray(rho(t, x)) if rho is not None else np.zeros(x.shape[0])
    return FieldState(float(t), x, E, B, divE - rho_val, divB, dtphi + divA, dtB + curlE, float(h))


def export_field_csv(path, states):
    """Write field slices with their constraint residuals (17 significant digits)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "x2", "x3", "E1", "E2", "E3", "B1", "B2", "B3",
                    "divE_minus_rho", "divB", "gauge_residual"])
        for st in states:
            for n in range(st.x.shape[0]):
                row = [st.t, *st.x[n], *st.E[n], *st.B[n], st.divE_minus_rho[n], st.divB[n], st.gauge_residual[n]]
                w.writerow([f"{float(a):.17g}" for a in row])
