import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lwvlasov.initial_data import GaussianBump
from lwvlasov.kernels import velocities
from lwvlasov.transport import (
    ConstantForce,
    Ensemble,
    GriddedFieldHistory,
    PhaseDensity,
    PhasePoint,
    ZeroForce,
    characteristics_step,
    evaluate_f,
    export_ensemble_csv,
    flow,
    rk4_step,
    seed_ensemble,
    support_radius,
    uniform_em_force,
)

PROFILE = GaussianBump(amplitude=1.0, x_radius=0.5, xi_radius=0.6)
EM = uniform_em_force([0.3, -0.2, 0.4], [0.5, 0.1, -0.3])


def random_phase(rng, n, xr=0.4, pr=0.5):
    return rng.uniform(-xr, xr, size=(n, 3)), rng.uniform(-pr, pr, size=(n, 3))


def test_zero_step_rejected():
    with pytest.raises(ValueError):
        characteristics_step(PhasePoint(np.zeros(3), np.zeros(3)), 0.0, 0.0, EM)


def test_nonfinite_phase_point_rejected():
    with pytest.raises(ValueError):
        PhasePoint(np.array([np.nan, 0, 0]), np.zeros(3))


def test_free_streaming_matches_closed_form():
    rng = np.random.default_rng(0)
    x, xi = random_phase(rng, 200, xr=0.8, pr=0.8)
    t = 0.7
    f = evaluate_f(PhaseDensity(PROFILE), t, x, xi)
    exact = PROFILE(x - t * velocities(xi), xi)
    np.testing.assert_allclose(f, exact, rtol=0, atol=1e-12)


def test_step_with_zero_force_is_straight_line():
    p = PhasePoint(np.array([0.1, 0.2, -0.3]), np.array([0.4, -0.2, 0.1]))
    q = characteristics_step(p, 0.0, 0.05, ZeroForce())
    np.testing.assert_allclose(q.x, p.x + 0.05 * velocities(p.xi), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(q.xi, p.xi)


def test_forward_backward_reversibility():
    rng = np.random.default_rng(1)
    x, xi = random_phase(rng, 100)
    dt = 0.025
    x1, p1 = rk4_step(0.3, x, xi, dt, EM)
    x2, p2 = rk4_step(0.3 + dt, x1, p1, -dt, EM)
    err = max(np.max(np.abs(x2 - x)), np.max(np.abs(p2 - xi)))
    assert err <= 1e-12


def test_long_flow_reversibility():
    rng = np.random.default_rng(2)
    x, xi = random_phase(rng, 50)
    xa, pa, _ = flow(0.0, 0.5, x, xi, EM, 0.025)
    xb, pb, _ = flow(0.5, 0.0, xa, pa, EM, 0.025)
    np.testing.assert_allclose(xb, x, rtol=0, atol=1e-11)
    np.testing.assert_allclose(pb, xi, rtol=0, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 2.0), st.integers(0, 2**31 - 1))
def test_finite_propagation_speed(t, seed):
    rng = np.random.default_rng(seed)
    x, xi = random_phase(rng, 20, pr=3.0)
    xt, _, _ = flow(0.0, t, x, xi, EM, 0.05)
    assert np.all(np.linalg.norm(xt - x, axis=1) < t)


def test_constant_force_support_growth():
    c = np.array([0.3, -0.4, 0.2])
    rng = np.random.default_rng(3)
    ens = Ensemble(*seed_ensemble(PROFILE, 200, rng))
    R0 = ens.radius.values[0]
    for t in np.linspace(0.1, 1.0, 10):
        ens.push(t, ConstantForce(c), 0.05)
        assert ens.radius.values[-1] <= R0 + np.linalg.norm(c) * t + 1e-12
    # momenta drift exactly by -c t
    assert ens.radius.r_star >= R0


def test_single_particle_at_rest_keeps_zero_radius():
    ens = Ensemble(np.zeros((1, 3)), np.zeros((1, 3)))
    for t in (0.1, 0.5, 1.0):
        ens.push(t, ZeroForce(), 0.1)
    assert ens.radius.values == [0.0, 0.0, 0.0, 0.0]
    assert ens.radius.r_star == 0.0


def test_empty_ensemble_rejected():
    with pytest.raises(ValueError):
        support_radius(0.0, np.zeros((0, 3)))
    with pytest.raises(ValueError):
        Ensemble(np.zeros((0, 3)), np.zeros((0, 3)))


def test_pullback_is_nonnegative_and_bounded():
    rng = np.random.default_rng(4)
    x, xi = random_phase(rng, 500, xr=0.7, pr=0.8)
    f = PhaseDensity(PROFILE, EM, max_step=0.05)(0.6, x, xi)
    assert np.all(f >= 0.0)
    assert np.all(f <= PROFILE.sup[0] + 1e-15)


def test_phase_volume_preserved():
    # div_x v + div_xi(-K) = 0, so the flow map has unit Jacobian
    rng = np.random.default_rng(5)
    x, xi = random_phase(rng, 5)
    h = 1e-5
    J = np.empty((5, 6, 6))
    for a in range(6):
        e = np.zeros(6)
        e[a] = h
        xp, pp, _ = flow(0.0, 0.8, x + e[:3], xi + e[3:], EM, 0.02)
        xm, pm, _ = flow(0.0, 0.8, x - e[:3], xi - e[3:], EM, 0.02)
        J[:, :, a] = np.concatenate([xp - xm, pp - pm], axis=1) / (2 * h)
    np.testing.assert_allclose(np.linalg.det(J), 1.0, atol=1e-8)


def test_density_gradient_matches_differences():
    rng = np.random.default_rng(6)
    x, xi = random_phase(rng, 10, xr=0.3, pr=0.3)
    dens = PhaseDensity(PROFILE, EM, max_step=0.05)
    gx, gp = dens.gradient(0.4, x, xi)
    h = 1e-5
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        fdx = (dens(0.4, x + e, xi) - dens(0.4, x - e, xi)) / (2 * h)
        fdp = (dens(0.4, x, xi + e) - dens(0.4, x, xi - e)) / (2 * h)
        np.testing.assert_allclose(gx[:, a], fdx, atol=1e-7)
        np.testing.assert_allclose(gp[:, a], fdp, atol=1e-7)


def test_per_point_start_times():
    rng = np.random.default_rng(7)
    x, xi = random_phase(rng, 6)
    t0 = np.array([0.1, 0.2, 0.3, 0.1, 0.5, 0.4])
    xa, pa, _ = flow(t0, 0.0, x, xi, EM, 0.05)
    for n in range(6):
        xb, pb, _ = flow(t0[n], 0.0, x[n:n + 1], xi[n:n + 1], EM, 0.05)
        # the batched call uses the step count of the longest span
        np.testing.assert_allclose(xa[n], xb[0], atol=1e-7)
        np.testing.assert_allclose(pa[n], pb[0], atol=1e-7)


def _uniform_history(E0, B0, n_slices=4):
    hist = GriddedFieldHistory(origin=(-2.0, -2.0, -2.0), spacing=0.25, shape=(17, 17, 17), dt=0.1)
    for _ in range(n_slices):
        hist.append(np.broadcast_to(E0, (17, 17, 17, 3)), np.broadcast_to(B0, (17, 17, 17, 3)))
    return hist


def test_gridded_uniform_field_matches_analytic_force():
    E0 = np.array([0.3, -0.2, 0.4])
    B0 = np.array([0.5, 0.1, -0.3])
    hist = _uniform_history(E0, B0)
    rng = np.random.default_rng(8)
    x, xi = random_phase(rng, 30)
    xa, pa, fa = flow(0.3, 0.0, x, xi, hist, 0.025)
    xb, pb, _ = flow(0.3, 0.0, x, xi, uniform_em_force(E0, B0), 0.025)
    assert not np.any(fa)
    np.testing.assert_allclose(xa, xb, atol=1e-13)
    np.testing.assert_allclose(pa, pb, atol=1e-13)


def test_gridded_field_flags_points_leaving_grid():
    hist = _uniform_history(np.zeros(3), np.zeros(3))
    _, _, flags = flow(0.3, 0.0, np.array([[1.95, 0.0, 0.0]]), np.array([[-5.0, 0.0, 0.0]]), hist, 0.025)
    assert flags[0]


def test_gridded_history_shape_checked():
    hist = GriddedFieldHistory((0, 0, 0), 0.1, (4, 4, 4), 0.1)
    with pytest.raises(ValueError):
        hist.append(np.zeros((3, 4, 4, 3)), np.zeros((3, 4, 4, 3)))
    with pytest.raises(RuntimeError):
        hist.fields


def test_max_principle_along_flow():
    # f(t) takes the values of f^in, so its sup over a pushed ensemble cannot grow
    rng = np.random.default_rng(9)
    x, xi = seed_ensemble(PROFILE, 300, rng)
    dens = PhaseDensity(PROFILE, EM, max_step=0.025)
    xt, pt, _ = flow(0.0, 0.5, x, xi, EM, 0.025)
    np.testing.assert_allclose(dens(0.5, xt, pt), PROFILE(x, xi), atol=1e-10)


def test_ensemble_csv(tmp_path):
    path = tmp_path / "ens.csv"
    x = np.array([[0.1, 0.2, 0.3]])
    xi = np.array([[1.0 / 3.0, 0.0, -0.5]])
    export_ensemble_csv(path, 0.5, x, xi, [0.25])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,xi1,xi2,xi3,f_value"
    assert float(lines[1].split(",")[4]) == 1.0 / 3.0
