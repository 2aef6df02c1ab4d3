import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwvlasov.fields import MomentSpec, RetardedFieldEngine
from lwvlasov.initial_data import GaussianBump, ZeroData
from lwvlasov.kernels import velocities
from lwvlasov.monitor import (
    CSV_COLUMNS,
    NormEntry,
    NormSeries,
    continuation_report,
    field_sup_norms,
    fit_field_constants,
    ln_plus,
    log_gronwall_check,
    phase_sup_norms,
    potential_derivative_sups,
    representation_derivative_sups,
    running_log_gronwall,
    sup_norm_estimates,
    write_report,
)
from lwvlasov.transport import ConstantForce, Ensemble, PhaseDensity, ZeroForce, seed_ensemble

PROFILE = GaussianBump(amplitude=1.0, x_radius=0.5, xi_radius=0.6, xi_center=(0.2, 0.0, 0.0))


def cube(n, half=0.6):
    a = np.linspace(-half, half, n)
    return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)


def transported_series(force, n_steps=10, dt=0.05, profile=PROFILE):
    """Monitor series of an ensemble pushed by a prescribed force."""
    ens = Ensemble(*seed_ensemble(profile, 60, np.random.default_rng(3)))
    dens = PhaseDensity(profile, force, max_step=dt)
    xi = np.array([profile.sup[1][1]])
    series = NormSeries()
    for k in range(n_steps + 1):
        t = k * dt
        if k:
            ens.push(t, force, dt)
        X = cube(5, 0.4) + t * velocities(xi)[0]
        series.append(sup_norm_estimates(t, dens, X, xi, Rf=ens.radius.values[-1]))
    return series


# -- entries and series ----------------------------------------------------------


def test_ln_plus_is_positive_part_of_log():
    np.testing.assert_allclose(ln_plus([0.0, 0.5, 1.0, np.e, 10.0]), [0, 0, 0, 1, np.log(10.0)], atol=1e-15)


def test_entries_must_be_nonnegative_and_ordered():
    with pytest.raises(ValueError):
        NormEntry(t=0.0, f_sup=-1.0)
    with pytest.raises(ValueError):
        NormEntry(t=0.0, I_1=np.nan)
    s = NormSeries().append(NormEntry(t=0.1))
    with pytest.raises(ValueError):
        s.append(NormEntry(t=0.1))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30))
def test_N_is_running_max(vals):
    s = NormSeries()
    for k, v in enumerate(vals):
        s.append(NormEntry(t=0.1 * k, gradf_sup=v))
    N = s.N
    assert np.all(np.diff(N) >= 0)
    np.testing.assert_array_equal(N, np.maximum.accumulate(vals))


def test_csv_round_trip_keeps_all_digits(tmp_path):
    s = NormSeries()
    rng = np.random.default_rng(0)
    for k in range(4):
        s.append(NormEntry(t=k / 3, Rf=rng.uniform(), gradf_sup=rng.uniform(), J_v=rng.uniform()))
    C = running_log_gronwall(s.t, s.N)
    path = tmp_path / "series.csv"
    s.to_csv(path, C)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS
    back = NormSeries.from_csv(path)
    for a, b in zip(s.entries, back.entries):
        assert a == b


# -- sup-norm estimates ----------------------------------------------------------------


def test_zero_slice_gives_zero_norms():
    dens = PhaseDensity(ZeroData())
    z = np.zeros((4, 4, 4, 3))
    e = sup_norm_estimates(0.3, dens, cube(3), cube(3, 0.3), z, z, 0.1,
                           potential_slices=[np.zeros((4, 4, 4, 4))] * 3, dt=0.1)
    assert all(getattr(e, k) == 0.0 for k in CSV_COLUMNS[1:-2])


def test_free_streaming_sup_is_constant():
    # a lattice moving with the velocity of the maximiser sees the same values
    s = transported_series(ZeroForce())
    f = s.column("f_sup")
    np.testing.assert_allclose(f, PROFILE.sup[0], rtol=1e-12)


def test_denser_lattice_never_decreases_estimates():
    dens = PhaseDensity(PROFILE, ConstantForce(np.array([0.1, 0.0, -0.2])), max_step=0.05)
    xi = cube(3, 0.5) + PROFILE.xi_shift
    coarse = phase_sup_norms(dens, 0.3, cube(5), xi)
    fine = phase_sup_norms(dens, 0.3, cube(9), xi)  # contains the coarse lattice
    assert fine[0] >= coarse[0] and fine[1] >= coarse[1]


def test_field_norms_of_linear_field():
    G = cube(6, 1.0).reshape(6, 6, 6, 3)
    h = 2.0 / 5
    M = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [0.5, 0.0, 0.0]])
    E = G @ M.T
    val, grad = field_sup_norms(E, np.zeros_like(E), h)
    np.testing.assert_allclose(val, np.max(np.linalg.norm(E, axis=-1)))
    np.testing.assert_allclose(grad, np.linalg.norm(M), rtol=1e-12)


def test_potential_derivatives_of_quadratic():
    # U = t^2 / 2 + 3 t x_1 + x_2^2 for every component
    h, dt = 0.1, 0.05
    G = cube(7, 0.3).reshape(7, 7, 7, 3)
    slices = []
    for t in (0.1, 0.15, 0.2):
        u = 0.5 * t * t + 3 * t * G[..., 0] + G[..., 1] ** 2
        slices.append(np.repeat(u[..., None], 4, axis=-1))
    I1, Iv, J1, Jv = potential_derivative_sups(slices, h, dt)
    # d_t U = t + 3 x_1, d_2 U = 2 x_2; second derivatives 1, 3, 2
    np.testing.assert_allclose(I1, 0.2 + 3 * 0.3, rtol=1e-12)
    np.testing.assert_allclose(J1, 3.0, rtol=1e-10)
    assert I1 == Iv and J1 == Jv


# -- logarithmic Gronwall ----------------------------------------------------------------


def test_constant_N_needs_no_constant():
    t = np.linspace(0, 1, 11)
    r = log_gronwall_check(t, np.full(11, 2.5))
    assert r.C == 0.0 and r.passes and not r.diverging
    assert r.implied_bound == pytest.approx(2.5)


@pytest.mark.parametrize("N0,lam", [(0.5, 2.0), (1.0, 0.5), (3.0, 2.0), (20.0, 1.0)])
def test_exponential_N_recovers_substitution_constant(N0, lam):
    t = np.linspace(0, 0.2, 41)
    r = log_gronwall_check(t, N0 * np.exp(lam * t))
    assert np.isfinite(r.C) and not r.diverging
    np.testing.assert_allclose(r.C, lam / (1 + max(np.log(N0), 0.0)), rtol=5e-2)


def test_blow_up_is_flagged():
    tau = 1.0
    t = np.linspace(0, 0.95, 96)
    r = log_gronwall_check(t, 1 / (tau - t), tau)
    assert r.diverging
    # the requirement keeps growing toward tau
    req = np.array(r.required)
    assert np.all(np.diff(req[48:]) > 0)


@pytest.mark.parametrize("N", [lambda t: 2 + np.sin(t), lambda t: 3 * np.exp(t), lambda t: 1 + t * t])
def test_fitted_constant_is_stable_under_refinement(N):
    Cs = [log_gronwall_check(np.linspace(0, 1, n), N(np.linspace(0, 1, n))).C for n in (21, 41, 81, 161)]
    np.testing.assert_allclose(Cs, Cs[-1], rtol=5e-2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=25))
def test_fit_holds_at_every_sample(vals):
    N = np.maximum.accumulate(vals)
    r = log_gronwall_check(np.linspace(0, 1, N.size), N)
    assert r.passes or np.isinf(r.C)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(0.0, 3.0), st.floats(0.0, 5.0))
def test_double_exponential_bound_dominates_smooth_series(N0, lam, a):
    t = np.linspace(0, 1, 81)
    N = N0 * np.exp(lam * t) + a * t * t
    r = log_gronwall_check(t, N)
    assert r.implied_bound >= N.max() * (1 - 1e-12)


def test_gronwall_rejections():
    with pytest.raises(ValueError):
        log_gronwall_check([0.0], [1.0])
    with pytest.raises(ValueError):
        log_gronwall_check([0.0, 0.1, 0.3], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        log_gronwall_check([0.0, 0.1], [1.0, -1.0])


# -- continuation report --------------------------------------------------------------------


def test_free_streaming_support_is_bounded():
    rep = continuation_report(transported_series(ZeroForce()), 0.5)
    assert rep["status"] == "R_f bounded & norms bounded"
    assert rep["Rf_growth"] == 0.0


def test_zero_data_report():
    zero = GaussianBump(amplitude=0.0)
    s = NormSeries()
    for k in range(5):
        s.append(sup_norm_estimates(0.1 * k, PhaseDensity(zero), cube(3), cube(3, 0.3)))
    assert all(not np.any(s.column(c)) for c in CSV_COLUMNS[2:-2])
    assert continuation_report(s, 0.5)["status"] == "zero data"


def test_constant_force_grows_support_linearly():
    c = np.array([0.0, 0.0, -0.4])
    s = transported_series(ConstantForce(c))
    rep = continuation_report(s, 0.5)
    assert rep["status"] == "support growing"
    Rf = s.column("Rf")
    assert np.all(Rf <= Rf[0] + np.linalg.norm(c) * s.t + 1e-12)
    # momenta drift exactly by -c t
    _, xi0 = seed_ensemble(PROFILE, 60, np.random.default_rng(3))
    exact = [np.max(np.linalg.norm(xi0 - c * t, axis=1)) for t in s.t]
    np.testing.assert_allclose(Rf, exact, rtol=1e-12)
    assert np.all(np.diff(Rf) > 0)


def test_report_is_deterministic(tmp_path):
    a = continuation_report(transported_series(ConstantForce(np.array([0.1, 0.2, 0.0]))), 0.5)
    b = continuation_report(transported_series(ConstantForce(np.array([0.1, 0.2, 0.0]))), 0.5)
    write_report(tmp_path / "a.json", a)
    write_report(tmp_path / "b.json", b)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text())["samples"] == 11


def test_field_constants_are_tight():
    s = NormSeries()
    for k in range(5):
        s.append(NormEntry(t=0.1 * k, gradf_sup=1.0, I_1=0.5, J_1=2.0, gradEB_sup=1.0))
    C = fit_field_constants(s)
    assert C["I_1"] == pytest.approx(0.5)
    assert C["J_1_plus_J_v"] == pytest.approx(2.0)


def test_representation_maxima_match_differences():
    spec = MomentSpec("1", r_star=0.7, n_momentum=16)
    dens = PhaseDensity(PROFILE, ZeroForce(), max_step=0.1)
    eng = RetardedFieldEngine(PROFILE, dens, spec, n_time=12, n_polar=12, n_azimuth=24)
    chk = representation_derivative_sups(eng, 0.4, [[0.1, -0.05, 0.2]], 4.0, first=(0, 2), second=((1, 1),),
                                         weights=("1", "v1"))
    assert chk.within_tolerance, chk
    assert chk.I_1 > 0 and chk.J_v > 0
