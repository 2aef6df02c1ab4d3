"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (the lines are printed
even without ``-s``).
"""
import json
import time

import numpy as np
import pytest

from lwvlasov.fields import divergence_xi
from lwvlasov.initial_data import GaussianBump
from lwvlasov.kernels import velocities
from lwvlasov.monitor import continuation_report, log_gronwall_check, write_report
from lwvlasov.simulation import MiniRun, MiniRunConfig
from lwvlasov.transport import PhaseDensity, evaluate_f, rk4_step, uniform_em_force
from lwvlasov.verification import (
    cone_mass_checks,
    field_checks,
    first_identity_checks,
    kernel_certification,
    mean_zero_checks,
    residue_checks,
    second_identity_checks,
)


@pytest.fixture
def verdict(capsys):
    """Print ``criterion N: PASS|FAIL`` with the measured figures, then assert."""
    def emit(n, title, checks, seconds=None, limit=None):
        ok = all(c.passed for c in checks)
        timing = ""
        if limit is not None:
            ok = ok and seconds < limit
            timing = f" [{seconds:.1f} s, limit {limit:.0f} s]"
        figures = "; ".join(f"{c.name}={c.value:.2e}{'' if c.passed else ' FAILED'}" for c in checks)
        with capsys.disabled():
            print(f"\ncriterion {n} ({title}): {'PASS' if ok else 'FAIL'} {figures}{timing}")
        assert ok, figures + timing
    return emit


def _timed(fn, *args, **kwargs):
    tic = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - tic


class _Result:
    """Minimal check record for criteria assembled inline."""

    def __init__(self, name, value, passed):
        self.name, self.value, self.passed = name, float(value), bool(passed)


@pytest.fixture(scope="module")
def mini_run():
    """The default self-consistent run (16^3 grid, 12^3 momenta, 20 steps to 0.5)."""
    cfg = MiniRunConfig()
    assert (cfg.n_grid, cfg.n_momentum, cfg.n_steps, cfg.t_final, cfg.profile) == (16, 12, 20, 0.5, "gaussian-bump")
    tic = time.perf_counter()
    run = MiniRun(cfg).run()
    run.run_diagnostics()
    return run, time.perf_counter() - tic


def test_criterion_1_kernel_certification(verdict):
    checks, sec = _timed(kernel_certification, n_velocities=50, v_max=0.9, seed=11)
    verdict(1, "kernel certification", checks, sec, 10)


def test_criterion_2_mean_zero(verdict):
    checks, sec = _timed(mean_zero_checks, n_velocities=20, v_max=0.9, sphere_order=32, seed=12)
    verdict(2, "sphere mean zero", checks, sec, 30)


def test_criterion_3_first_division_identity(verdict):
    checks, sec = _timed(first_identity_checks, n_samples=10, seed=13)
    verdict(3, "first-order division identity", checks, sec, 60)


def test_criterion_4_second_division_identity(verdict):
    checks, sec = _timed(second_identity_checks, n_samples=10, seed=14)
    verdict(4, "second-order division identity", checks, sec, 300)


def test_criterion_5_residues(verdict):
    verdict(5, "residues", residue_checks())


def test_criterion_6_cone_mass(verdict):
    verdict(6, "cone quadrature mass", cone_mass_checks(times=(0.1, 1.0, 5.0)))


def test_criterion_7_field_representations(verdict):
    checks, sec = _timed(field_checks, cone_order=16, momentum_order=16)
    verdict(7, "field representation cross-check", checks, sec, 600)


def test_criterion_8_maxwell_and_gauge(verdict, mini_run):
    run, sec = mini_run
    d = run.diagnostics
    checks = []
    for name in ("divB", "gauge"):
        r = d[name]["ratio"]
        checks.append(_Result(f"{name}_ratio", r, 3.0 <= r <= 5.5))
    e = d["divE_minus_rho"]
    checks.append(_Result("divE_minus_rho", e["fine"], e["fine"] <= e["discretization_estimate"]))
    checks.append(_Result("divE_estimate", e["discretization_estimate"], run.manifest()["diagnostics"]["divE_minus_rho"]
                          ["bounded"]))
    verdict(8, "Maxwell and gauge consistency", checks, sec, 1800)


def test_criterion_9_transport_fidelity(verdict, mini_run):
    run, _ = mini_run
    checks = [_Result("max_principle", run.manifest()["max_principle_deviation"],
                      run.manifest()["max_principle_deviation"] <= 1e-6)]
    rng = np.random.default_rng(19)
    prof = GaussianBump(amplitude=1.0, x_radius=0.8, xi_radius=0.6)
    x = rng.uniform(-0.8, 0.8, size=(300, 3))
    xi = rng.uniform(-0.6, 0.6, size=(300, 3))
    t = 0.7
    err = np.max(np.abs(evaluate_f(PhaseDensity(prof), t, x, xi) - prof(x - t * velocities(xi), xi)))
    checks.append(_Result("free_streaming", err, err <= 1e-12))
    EM = uniform_em_force([0.3, -0.1, 0.2], [0.1, 0.4, -0.2])
    dt = 0.025
    x1, p1 = rk4_step(0.3, x, xi, dt, EM)
    x2, p2 = rk4_step(0.3 + dt, x1, p1, -dt, EM)
    rev = max(np.max(np.abs(x2 - x)), np.max(np.abs(p2 - xi)))
    checks.append(_Result("reversibility", rev, rev <= 1e-12))
    # the force of the run itself, interpolated from the stored field slices
    K = run.history
    pts = run.diagnostic_points()
    P = np.repeat(pts, 5, axis=0)
    Q = run.xi_center + rng.uniform(-0.4, 0.4, size=(P.shape[0], 3))
    div_K, scale = divergence_xi(K, 0.4, P, Q)
    div = float(np.max(np.abs(div_K)))
    checks.append(_Result("div_xi_K", div / scale, div <= 1e-6 * scale))
    verdict(9, "transport fidelity", checks)


SMALL = dict(n_grid=10, n_momentum=8, n_steps=8, t_final=0.2, sphere_polar=6, sphere_azimuth=12, n_ensemble=50,
             x_radius=0.5, half_width=1.0, seed=5)


def test_criterion_10_monitors(verdict, tmp_path):
    checks = []
    t = np.linspace(0, 1, 21)
    r = log_gronwall_check(t, np.full(t.size, 2.0))
    checks.append(_Result("constant_C", r.C, r.C == 0.0 and r.passes))
    t = np.linspace(0, 0.2, 41)
    N0, lam = 3.0, 2.0
    r = log_gronwall_check(t, N0 * np.exp(lam * t))
    rel = abs(r.C - lam / (1 + np.log(N0))) / (lam / (1 + np.log(N0)))
    checks.append(_Result("exponential_C_rel_err", rel, np.isfinite(r.C) and rel <= 0.05 and not r.diverging))
    t = np.linspace(0, 0.95, 96)
    r = log_gronwall_check(t, 1 / (1.0 - t), 1.0)
    checks.append(_Result("blow_up_flagged", r.C, r.diverging))
    files = []
    for k in range(2):
        run = MiniRun(MiniRunConfig(**SMALL)).run()
        path = tmp_path / f"report{k}.json"
        write_report(path, continuation_report(run.monitor, run.config.t_final))
        files.append(path.read_bytes())
    same = files[0] == files[1]
    checks.append(_Result("report_deterministic", 0.0 if same else 1.0, same))
    assert json.loads(files[0])["samples"] == SMALL["n_steps"] + 1
    verdict(10, "monitors", checks)
