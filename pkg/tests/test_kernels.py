import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lwvlasov.kernels import (
    ConeKernelSet,
    CutoffProfile,
    HomogeneousFunction,
    KernelDomainError,
    SubluminalVelocity,
    disk_mean_zero_2d,
    euler_residual,
    homogeneity_check,
    kernel_evaluators,
    kernel_scale,
    plateau_xi_jet,
    relativistic_velocity,
    sample_kernel_points,
    sphere_mean_zero,
    velocity_hessian,
    velocity_jacobian,
)
from lwvlasov.quadrature import SphereRule

try:
    import jax
    jax.config.update("jax_enable_x64", True)
    jnp = jax.numpy
except ImportError:  # only the autodiff oracle needs it
    jax = jnp = None


def random_velocity(rng, vmax=0.9, dim=3):
    d = rng.normal(size=dim)
    return d / np.linalg.norm(d) * rng.uniform(0.05, vmax)


def fd_gradient(func, P, h=1e-5):
    """Five-point central differences, derivative axis last."""
    out = []
    for a in range(P.shape[1]):
        e = np.zeros(P.shape[1])
        e[a] = h
        out.append((-func(P + 2 * e) + 8 * func(P + e) - 8 * func(P - e) + func(P - 2 * e)) / (12 * h))
    return np.stack(out, axis=-1)


# -- velocities -------------------------------------------------------------


def test_relativistic_velocity_examples():
    np.testing.assert_array_equal(relativistic_velocity([0, 0, 0]).v, np.zeros(3))
    np.testing.assert_allclose(relativistic_velocity([1, 0, 0]).v, [2**-0.5, 0, 0], rtol=1e-15)
    fast = relativistic_velocity([100, 0, 0])
    assert fast.speed == pytest.approx(100 / np.sqrt(10001), rel=1e-15)
    assert fast.speed < 1


def test_velocity_rejects_bad_input():
    with pytest.raises(ValueError):
        relativistic_velocity([np.nan, 0, 0])
    with pytest.raises(ValueError):
        SubluminalVelocity(np.array([1.0, 0, 0]))


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3))
def test_velocity_always_subluminal(xi):
    assert relativistic_velocity(xi).speed < 1.0


def test_velocity_derivatives_match_fd():
    rng = np.random.default_rng(3)
    xi = rng.normal(size=(20, 3))
    v = lambda X: X / np.sqrt(1 + np.sum(X * X, axis=-1, keepdims=True))
    np.testing.assert_allclose(velocity_jacobian(xi), fd_gradient(v, xi), atol=1e-9)
    np.testing.assert_allclose(velocity_hessian(xi), fd_gradient(velocity_jacobian, xi), atol=1e-9)


# -- cutoff ------------------------------------------------------------------


def test_cutoff_profile_shape():
    chi = CutoffProfile.for_speed(0.6)
    assert chi.c1 == pytest.approx(0.5 + 0.5 / 0.6)
    assert chi.c2 < 1 / 0.6
    r = np.linspace(0, 2, 2001)
    vals = chi(r)
    assert np.all(vals[r <= chi.c1] == 1.0)
    assert np.all(vals[r >= chi.c2] == 0.0)
    assert np.all(np.diff(vals) <= 0)
    # C^2 joins: derivatives vanish at both ends
    for edge in (chi.c1, chi.c2):
        d = chi.derivatives(np.array([edge - 1e-9, edge + 1e-9]))
        assert np.max(np.abs(d[1])) < 1e-6 and np.max(np.abs(d[2])) < 1e-3


def test_cutoff_unit_at_rest():
    chi = CutoffProfile.for_speed(0.0)
    assert chi.is_unit
    np.testing.assert_array_equal(chi(np.array([0.0, 5.0, 1e6])), 1.0)


# -- alpha and a-kernels ----------------------------------------------------


def test_alpha_examples():
    k0 = ConeKernelSet(np.zeros(3))
    np.testing.assert_allclose(k0.alpha(np.array([[1, 0.3, 0, 0]]))[0, :2], [1.0, -0.3])
    k = ConeKernelSet(np.array([0.5, 0, 0]))
    np.testing.assert_allclose(k.alpha(np.array([[1.0, 1.0, 0, 0]]))[0, :2], [2.0, -2.0])
    p = np.array([[1.3, 0.2, -0.4, 0.5]])
    np.testing.assert_allclose(k.alpha(2 * p), k.alpha(p), rtol=1e-15)


def test_singular_plane_rejected():
    k = ConeKernelSet(np.array([0.5, 0, 0]))
    with pytest.raises(KernelDomainError):
        k.alpha(np.array([[1.0, 2.0, 0.3, 0.0]]))


def test_nonpositive_time_rejected():
    k = ConeKernelSet(np.array([0.2, 0.1, 0]))
    with pytest.raises(KernelDomainError):
        k.a_kernels(np.array([[0.0, 0.1, 0, 0]]))


def test_cone_values_at_rest():
    k = ConeKernelSet(np.zeros(3))
    rule = SphereRule(4, 8)
    P = np.concatenate([np.ones((len(rule), 1)), rule.points], axis=1)
    A = k.a_kernels(P)
    np.testing.assert_allclose(A.a0[:, 0], 1.0)
    np.testing.assert_allclose(A.a1[:, 0], 0.0, atol=1e-15)
    B = k.b_kernels(P)
    np.testing.assert_allclose(B.b0[:, 0, 0], 1.0)
    np.testing.assert_allclose(B.b1[:, 0, 0], 0.0, atol=1e-15)
    np.testing.assert_allclose(B.b2[:, 0, 0], 0.0, atol=1e-15)


def test_chi_is_one_on_cone():
    rng = np.random.default_rng(0)
    for _ in range(10):
        k = ConeKernelSet(random_velocity(rng, 0.99))
        dirs = rng.normal(size=(50, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t = rng.uniform(0.1, 3, size=50)
        P = np.concatenate([t[:, None], t[:, None] * dirs], axis=1)
        np.testing.assert_array_equal(k.chi(np.linalg.norm(P[:, 1:], axis=1) / P[:, 0]), 1.0)
        np.testing.assert_allclose(k.a_kernels(P).a0, k.alpha(P), rtol=1e-15)
        d = k.chi.derivatives(np.linalg.norm(P[:, 1:], axis=1) / P[:, 0])
        assert all(np.all(x == 0.0) for x in d[1:])


def test_a1_is_minus_streaming_of_a0():
    rng = np.random.default_rng(1)
    for _ in range(10):
        k = ConeKernelSet(random_velocity(rng))
        P = sample_kernel_points(k, 60, rng)
        A = k.a_kernels(P)
        fd = fd_gradient(lambda Q: k.a_kernels(Q).a0, P)
        np.testing.assert_allclose(A.a1, -fd @ k.tau, rtol=1e-8, atol=1e-9 * np.max(np.abs(A.a1)))


def test_gradients_match_fd():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(8):
        k = ConeKernelSet(random_velocity(rng))
        P = sample_kernel_points(k, 30, rng)
        for name, g in kernel_evaluators(k).items():
            if g.grad is None:
                continue
            exact = g.grad(P)
            fd = fd_gradient(g, P)
            rel = np.linalg.norm((exact - fd).reshape(len(P), -1), axis=1) / np.maximum(
                np.linalg.norm(exact.reshape(len(P), -1), axis=1), 1e-300
            )
            worst = max(worst, rel.max())
    assert worst <= 1e-6


# -- AD oracle for the b kernels ---------------------------------------------


def _jax_kernels(v, c1, c2):
    v = jnp.asarray(v)
    tau = jnp.concatenate([jnp.ones(1), v])
    s = jnp.array([1.0, -1.0, -1.0, -1.0])

    def chi(r):
        if np.isinf(c1):
            return 1.0
        u = jnp.clip((r - c1) / (c2 - c1), 0.0, 1.0)
        return 1.0 - u**3 * (10 - 15 * u + 6 * u * u)

    def a0(p):
        D = p[0] - p[1:] @ v
        return s * p / D * chi(jnp.linalg.norm(p[1:]) / p[0])

    def a1(p):
        return -jax.jacfwd(a0)(p) @ tau

    def b(p):
        A0, A1 = a0(p), a1(p)
        dA0 = jax.jacfwd(a0)(p)   # [j, i] = d_i a_j
        dA1 = jax.jacfwd(a1)(p)
        T = lambda fn: jax.jacfwd(fn)(p) @ tau
        b0 = jnp.outer(A0, A0)
        b1 = dA0.T - T(lambda q: jnp.outer(a0(q), a0(q))) + jnp.outer(A0, A1)
        b2 = dA1.T - T(lambda q: jnp.outer(a0(q), a1(q)))
        return b0, b1, b2

    return jax.jit(b)


@pytest.mark.skipif(jax is None, reason="jax not installed")
def test_b_kernels_match_autodiff():
    rng = np.random.default_rng(4)
    for _ in range(4):
        k = ConeKernelSet(random_velocity(rng))
        oracle = _jax_kernels(k.velocity.v, k.chi.c1, k.chi.c2)
        P = sample_kernel_points(k, 12, rng)
        B = k.b_kernels(P)
        for n, p in enumerate(P):
            ref = [np.asarray(a) for a in oracle(jnp.asarray(p))]
            for q in range(3):
                scale = np.max(np.abs(ref[q])) + 1e-300
                assert np.max(np.abs(B[q][n] - ref[q])) / scale <= 1e-10


def test_b0_symmetric():
    rng = np.random.default_rng(5)
    k = ConeKernelSet(random_velocity(rng))
    b0 = k.b_kernels(sample_kernel_points(k, 30, rng)).b0
    np.testing.assert_array_equal(b0, np.swapaxes(b0, 1, 2))


# -- homogeneity and Euler ---------------------------------------------------


def test_homogeneity_of_all_kernels():
    rng = np.random.default_rng(6)
    for _ in range(5):
        k = ConeKernelSet(random_velocity(rng))
        P = sample_kernel_points(k, 40, rng)
        for g in kernel_evaluators(k).values():
            assert homogeneity_check(g, P) <= 1e-10, g.name


def test_homogeneity_detects_wrong_tag():
    k = ConeKernelSet(np.array([0.3, 0.2, 0.0]))
    P = sample_kernel_points(k, 20, np.random.default_rng(0))
    wrong = HomogeneousFunction(lambda Q: k.alpha(Q)[:, 0], -1)
    assert homogeneity_check(wrong, P) > 0.4


def test_euler_residual_examples():
    g = HomogeneousFunction(lambda P: P[:, 0], 1, lambda P: np.tile([1.0, 0, 0, 0], (len(P), 1)))
    assert euler_residual(g, np.array([[1.3, 0.2, 0.1, -0.4]])) == 0.0
    rng = np.random.default_rng(7)
    k = ConeKernelSet(random_velocity(rng))
    P = sample_kernel_points(k, 30, rng)
    ev = kernel_evaluators(k)
    assert np.max(euler_residual(ev["a0"], P)) <= 1e-10
    assert np.max(euler_residual(ev["b2"], P)) <= 1e-8


# -- sphere and disk means ---------------------------------------------------


def test_sphere_rule_sanity():
    k = ConeKernelSet(np.zeros(3))
    assert sphere_mean_zero(k, integrand=lambda X: np.ones(len(X))) == pytest.approx(4 * np.pi, rel=1e-14)
    assert sphere_mean_zero(k, 0, 0) == 0.0


def test_sphere_mean_zero_random_velocities():
    rng = np.random.default_rng(8)
    for _ in range(5):
        k = ConeKernelSet(random_velocity(rng))
        table = sphere_mean_zero(k)
        assert np.all(np.abs(table) <= 1e-8 * kernel_scale(k))


def test_sphere_mean_zero_converges_or_floors():
    k = ConeKernelSet(np.array([0.5, -0.4, 0.6]))
    coarse = np.abs(sphere_mean_zero(k, rule=SphereRule(8, 16)))
    fine = np.abs(sphere_mean_zero(k, rule=SphereRule(16, 32)))
    floor = 1e-13 * kernel_scale(k)
    assert np.all((fine <= coarse / 10) | (fine <= floor))


def test_disk_mean_zero():
    k2 = ConeKernelSet(np.zeros(2))
    assert disk_mean_zero_2d(k2, integrand=lambda Y: np.ones(len(Y))) == pytest.approx(2 * np.pi, rel=1e-12)
    assert disk_mean_zero_2d(k2, 0, 0) == 0.0
    rng = np.random.default_rng(9)
    for _ in range(5):
        k2 = ConeKernelSet(random_velocity(rng, dim=2))
        assert np.max(np.abs(disk_mean_zero_2d(k2))) <= 1e-6


# -- momentum derivatives on the plateau -------------------------------------


def test_plateau_jet_matches_kernel_set_and_fd():
    rng = np.random.default_rng(10)
    xi = rng.normal(size=(15, 3))
    v = xi / np.sqrt(1 + np.sum(xi**2, axis=1, keepdims=True))
    dirs = rng.normal(size=(15, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t = rng.uniform(0.5, 2, size=15)
    P = np.concatenate([t[:, None], t[:, None] * dirs], axis=1)
    J = plateau_xi_jet(P, v)
    for n in range(15):
        A = ConeKernelSet(v[n]).a_kernels(P[n : n + 1])
        np.testing.assert_allclose(J.a0[n], A.a0[0], rtol=1e-13)
        np.testing.assert_allclose(J.a1[n], A.a1[0], rtol=1e-12, atol=1e-13)
    fd = fd_gradient(lambda V: plateau_xi_jet(P, V).a0, v)
    np.testing.assert_allclose(J.dv_a0, fd, atol=1e-8)
    fd2 = fd_gradient(lambda V: plateau_xi_jet(P, V).dv_a0, v)
    np.testing.assert_allclose(J.dv2_a0, fd2, atol=1e-7)
    fd1 = fd_gradient(lambda V: plateau_xi_jet(P, V).a1, v)
    np.testing.assert_allclose(J.dv_a1, fd1, atol=1e-7)


def test_extended_precision_input_is_kept():
    k = ConeKernelSet(relativistic_velocity([0.5, -0.3, 0.2]))
    P = np.array([[1.0, 0.3, -0.2, 0.5], [1.3, 1.0, 0.5, 0.0]])
    for name, g in kernel_evaluators(k).items():
        hi = np.asarray(g(P.astype(np.longdouble)))
        assert hi.dtype == np.longdouble, name
        np.testing.assert_allclose(hi.astype(float), g(P), rtol=1e-13, atol=1e-13)
