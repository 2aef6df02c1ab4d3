import json

import numpy as np
import pytest

from lwvlasov.initial_data import GaussianBump
from lwvlasov.simulation import MiniRun, MiniRunConfig, lag_weights, momentum_box

SMALL = dict(n_grid=10, n_momentum=8, n_steps=8, t_final=0.2, sphere_polar=6, sphere_azimuth=12,
             n_ensemble=50, x_radius=0.5, half_width=1.0)


@pytest.fixture(scope="module")
def small_run():
    return MiniRun(MiniRunConfig(**SMALL)).run()


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 11])
def test_lag_weights_integrate_cubics(n):
    dt = 0.025
    s = np.arange(n + 1) * dt
    w = lag_weights(n, dt)
    for p in range(4):
        np.testing.assert_allclose(np.sum(w * s**p), (n * dt) ** (p + 1) / (p + 1), rtol=1e-12)


def test_lag_weights_trapezoid_and_rejections():
    w = lag_weights(4, 0.5, "trapezoid")
    np.testing.assert_allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])
    with pytest.raises(ValueError):
        lag_weights(0, 0.1)
    with pytest.raises(ValueError):
        lag_weights(3, 0.1, "midpoint")


def test_momentum_box_reproduces_momentum_mass():
    prof = GaussianBump(xi_center=(0.3, 0.0, 0.0))
    xi, w = momentum_box(prof.xi_shift, 0.75, 12, prof)
    h = prof.momentum_factor(np.linalg.norm(xi - prof.xi_shift, axis=1))
    np.testing.assert_allclose(np.sum(w * h), prof.momentum_mass(), rtol=1e-14)
    assert np.all(np.linalg.norm(xi - prof.xi_shift, axis=1) < 0.75)


def test_config_validation():
    with pytest.raises(ValueError):
        MiniRunConfig(n_steps=3).validate()
    with pytest.raises(ValueError):
        MiniRunConfig(t_final=-1.0).validate()


def test_initial_moments_match_grid_moments(small_run):
    G = small_run.grid.reshape(-1, 3)
    np.testing.assert_allclose(small_run.initial_moments(G), small_run.moments[0].reshape(-1, 4), atol=1e-15)


def test_max_principle_and_support(small_run):
    man = small_run.manifest()
    assert man["max_principle_deviation"] <= 1e-6
    assert man["support_within_box"]
    assert all(r["outside_flags"] == 0 for r in man["steps"])
    # moments at t_k never feed the fields at t_k
    assert all(r["corrector_change"] == 0.0 for r in man["steps"])


def test_first_step_has_no_magnetic_field(small_run):
    # B at t_1 comes from the t = 0 current alone; with a drifting bump it is
    # nonzero, but at t_0 it is zero by construction
    F = small_run.history.fields
    np.testing.assert_array_equal(F[0][..., 3:], 0.0)
    assert np.max(np.abs(F[-1][..., 3:])) > 0


def test_charge_roughly_conserved(small_run):
    q = [r.rho_total for r in small_run.records]
    assert abs(q[-1] - q[0]) <= 2e-2 * q[0]


def test_manifest_is_reproducible(small_run):
    again = MiniRun(MiniRunConfig(**SMALL)).run()
    a = json.dumps(small_run.manifest(), sort_keys=True)
    b = json.dumps(again.manifest(), sort_keys=True)
    assert a == b


def test_zero_data_stays_zero():
    run = MiniRun(MiniRunConfig(**{**SMALL, "profile": "zero", "n_steps": 7})).run()
    np.testing.assert_array_equal(run.history.fields, 0.0)
    np.testing.assert_array_equal(run.moments, 0.0)


def test_diagnostics_need_neighbouring_slices(small_run):
    with pytest.raises(ValueError):
        small_run.constraint_residuals(small_run.step_index, np.zeros((1, 3)), 0.1)
    res = small_run.constraint_residuals(4, small_run.diagnostic_points()[:1], 0.1)
    assert all(np.all(np.isfinite(r)) for r in res)


def test_monitor_series_follows_the_run(small_run):
    s = small_run.monitor
    assert len(s) == SMALL["n_steps"] + 1
    assert np.all(np.diff(s.N) >= 0)
    assert s.entries[0].I_1 == 0.0 and s.entries[-1].I_1 > 0
    np.testing.assert_allclose(s.column("Rf"), small_run.ensemble.radius.values)
    rep = small_run.manifest()["continuation"]
    assert rep["gronwall"]["passes"] and not rep["gronwall"]["diverging"]
