"""Command line runner: ``lwvlasov <mode> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Every mode writes its artifacts and ``manifest.json`` into the output
directory.  The manifest (configuration echo, version, checks, pass/fail
counts, artifact list) is byte-for-byte reproducible; wall-clock times go to
``timings.json`` next to it.  The exit status is 1 exactly when a check
exceeds its tolerance, 2 for configuration or I/O errors.
"""
import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import MODES, ConfigError, RunConfig, default_threads, load_config

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2
SERIES_FILE = "series.csv"
REPORT_FILE = "continuation.json"


def set_threads(n):
    """Cap numba and BLAS thread pools; 0 leaves the defaults."""
    if n <= 0:
        return None
    import numba

    with warnings.catch_warnings():
        # numba reports unusable threading layers when the pool is first touched
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def initial_data(cfg: RunConfig):
    from .initial_data import make_initial_data

    if cfg.profile == "zero":
        return make_initial_data("zero")
    params = dict(amplitude=cfg.amplitude, x_radius=cfg.x_radius, x_power=cfg.x_power)
    if cfg.profile == "gaussian-bump":
        params.update(xi_radius=cfg.xi_radius, xi_center=tuple(cfg.xi_center))
    return make_initial_data(cfg.profile, **params)


# ---------------------------------------------------------------------------
# modes; each returns (checks, artifacts, timings)


def run_verify_kernels(cfg, out):
    from .verification import cone_mass_checks, kernel_certification, mean_zero_checks, residue_checks, timed

    rng = np.random.default_rng(cfg.seed)
    s1, s2 = (int(a) for a in rng.integers(0, 2**31, size=2))
    checks, times = [], {}
    for name, fn, kw in (
        ("kernel_certification", kernel_certification, dict(n_velocities=cfg.n_velocities, v_max=cfg.v_max, seed=s1)),
        ("mean_zero", mean_zero_checks, dict(v_max=cfg.v_max, sphere_order=cfg.sphere_order, seed=s2)),
        ("residues", residue_checks, {}),
        ("cone_mass", cone_mass_checks, dict(sphere_order=cfg.sphere_order)),
    ):
        res, times[name] = timed(fn, **kw)
        checks += res
    _dump(os.path.join(out, "checks.json"), [c.record() for c in checks])
    return checks, ["checks.json"], times


def run_verify_identities(cfg, out):
    from .cone import RayOrders
    from .verification import first_identity_checks, second_identity_checks, timed

    orders = RayOrders(cfg.sphere_order, 2 * cfg.sphere_order, cfg.time_order)
    rng = np.random.default_rng(cfg.seed)
    s1, s2 = (int(a) for a in rng.integers(0, 2**31, size=2))
    first, t1 = timed(first_identity_checks, cfg.n_samples, cfg.v_max, s1, orders=orders)
    second, t2 = timed(second_identity_checks, cfg.n_samples, cfg.v_max, s2, orders=orders)
    checks = first + second
    _dump(os.path.join(out, "checks.json"), [c.record() for c in checks])
    return checks, ["checks.json"], {"first_order": t1, "second_order": t2}


def run_fields(cfg, out):
    from .fields import export_field_csv
    from .verification import field_checks, field_slice, timed

    checks, t_check = timed(field_checks, cfg.time_order, cfg.momentum_order, cfg.field_first, cfg.field_second)
    rng = np.random.default_rng(cfg.seed)
    d = rng.normal(size=(2, 3))
    pts = 0.5 * cfg.x_radius * d / np.linalg.norm(d, axis=1, keepdims=True)
    t = min(cfg.horizon, 0.4)
    state, t_slice = timed(field_slice, initial_data(cfg), t, pts, min(0.05, t / 4), cfg.time_order,
                           cfg.momentum_order)
    export_field_csv(os.path.join(out, "fields.csv"), [state])
    _dump(os.path.join(out, "checks.json"), [c.record() for c in checks])
    return checks, ["checks.json", "fields.csv"], {"representation_checks": t_check, "field_slice": t_slice}


def simulation_checks(run, cfg):
    """Tolerance checks of a finished mini-run (see ``simulation.MiniRun``)."""
    from .verification import Check, check

    man = run.manifest()
    checks = [check("max_principle", man["max_principle_deviation"], cfg.max_principle),
              Check("support_within_box", float(not man["support_within_box"]), 0.0, man["support_within_box"]),
              check("characteristics_left_grid", sum(r["outside_flags"] for r in man["steps"]), 0)]
    diag = man["diagnostics"]
    if diag is not None:
        for name in ("divB", "gauge"):
            d = diag[name]
            resolved = d["coarse"] > 1e-14
            ratio = d["ratio"] if resolved else 4.0
            checks.append(Check(f"{name}_refinement_ratio", ratio, 4.0, bool(3.0 <= ratio <= 5.5),
                                "expected about 4 when the step halves (band 3 to 5.5)"))
        e = diag["divE_minus_rho"]
        checks.append(Check("divE_minus_rho_bounded", e["fine"], e["discretization_estimate"], e["bounded"],
                            "residual against the reported discretization estimate"))
    return checks


def run_simulate(cfg, out):
    from .monitor import running_log_gronwall, write_report
    from .simulation import MiniRun, MiniRunConfig

    mc = MiniRunConfig(profile=cfg.profile, amplitude=cfg.amplitude, x_radius=cfg.x_radius, x_power=cfg.x_power,
                       xi_radius=cfg.xi_radius, xi_center=tuple(cfg.xi_center), n_grid=cfg.n_grid,
                       half_width=cfg.half_width, n_momentum=cfg.sim_momentum_order, n_steps=cfg.n_steps,
                       t_final=cfg.horizon, sphere_polar=cfg.sim_sphere_order,
                       sphere_azimuth=2 * cfg.sim_sphere_order, n_ensemble=cfg.ensemble, seed=cfg.seed)
    tic = time.perf_counter()
    run = MiniRun(mc, initial_data(cfg)).run()
    t_run = time.perf_counter() - tic
    tic = time.perf_counter()
    if cfg.diagnostics and cfg.profile != "zero":
        run.run_diagnostics()
    t_diag = time.perf_counter() - tic
    series = run.monitor
    series.to_csv(os.path.join(out, SERIES_FILE), running_log_gronwall(series.t, series.N))
    write_report(os.path.join(out, REPORT_FILE), run.manifest()["continuation"])
    _dump(os.path.join(out, "run.json"), _plain(run.manifest()))
    return simulation_checks(run, cfg), [SERIES_FILE, REPORT_FILE, "run.json"], {
        "march": t_run, "diagnostics": t_diag, "seconds_per_step": [r.seconds for r in run.records]}


def run_report(cfg, out):
    from .monitor import NormSeries, continuation_report, write_report

    src = cfg.series or out
    path = os.path.join(src, SERIES_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no recorded series at {path}")
    tic = time.perf_counter()
    rep = continuation_report(NormSeries.from_csv(path), cfg.horizon)
    write_report(os.path.join(out, REPORT_FILE), rep)
    return [], [REPORT_FILE], {"report": time.perf_counter() - tic}


RUNNERS = {"verify-kernels": run_verify_kernels, "verify-identities": run_verify_identities, "fields": run_fields,
           "simulate": run_simulate, "report": run_report}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def run(cfg: RunConfig, out=None):
    """Execute ``cfg.mode``; returns the manifest dictionary."""
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    checks, artifacts, timings = RUNNERS[cfg.mode](cfg, out)
    manifest = {
        "mode": cfg.mode,
        "version": __version__,
        "config": cfg.echo(),
        "checks": [c.record() for c in checks],
        "passed": sum(c.passed for c in checks),
        "failed": sum(not c.passed for c in checks),
        "artifacts": sorted(artifacts),
    }
    _dump(os.path.join(out, "manifest.json"), _plain(manifest))
    _dump(os.path.join(out, "timings.json"), _plain(timings))
    return manifest


def build_parser():
    p = argparse.ArgumentParser(prog="lwvlasov", description="Verification suites and self-consistent runs.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the configuration)")
    p.add_argument("--seed", type=int, help="random seed (overrides the configuration)")
    p.add_argument("--threads", type=int, help="thread cap; default from LWVLASOV_THREADS")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg.mode = args.mode
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        cfg.threads = args.threads if args.threads is not None else (cfg.threads or default_threads())
        cfg.validate()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    limiter = set_threads(cfg.threads)
    try:
        manifest = run(cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        if limiter is not None:
            limiter.unregister()
    for c in manifest["checks"]:
        print(("PASS " if c["passed"] else "FAIL ") + f"{c['name']}: {c['value']:.3e} (tolerance {c['tolerance']:.1e})")
    print(f"{manifest['passed']} passed, {manifest['failed']} failed; artifacts in {cfg.out}")
    return EXIT_FAILED if manifest["failed"] else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
