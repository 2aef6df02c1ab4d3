"""Monitored norms of a run, Gronwall-type fits and the continuation report.

Every sup-norm here is a maximum over a sampling lattice and therefore a
lower bound of the true supremum.  The Gronwall constants are the smallest
values making the corresponding inequality hold on the recorded samples; no
analytic constant is ever computed.
"""
import csv
import json
from dataclasses import asdict, dataclass, field, fields
from typing import List

import numpy as np

CSV_COLUMNS = ("t", "Rf", "f_sup", "gradf_sup", "EB_sup", "gradEB_sup", "I_1", "I_v", "J_1", "J_v", "N", "fitted_C")


def ln_plus(z):
    """``max(ln z, 0)``, with ``ln_plus(0) = 0``."""
    z = np.asarray(z, dtype=float)
    return np.log(np.maximum(z, 1.0))


@dataclass
class NormEntry:
    t: float
    Rf: float = 0.0
    f_sup: float = 0.0
    gradf_sup: float = 0.0
    EB_sup: float = 0.0
    gradEB_sup: float = 0.0
    I_1: float = 0.0
    I_v: float = 0.0
    J_1: float = 0.0
    J_v: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name != "t" and not (np.isfinite(val) and val >= 0):
                raise ValueError(f"monitor entry {f.name} must be finite and nonnegative, got {val}")


@dataclass
class NormSeries:
    """Per-step monitor entries; ``N`` is the running max of the gradient of f."""

    entries: List[NormEntry] = field(default_factory=list)

    def append(self, entry: NormEntry):
        if self.entries and entry.t <= self.entries[-1].t:
            raise ValueError("monitor entries must be added in increasing time")
        self.entries.append(entry)
        return self

    def __len__(self):
        return len(self.entries)

    def column(self, name):
        if name == "N":
            return np.maximum.accumulate(self.column("gradf_sup")) if self.entries else np.zeros(0)
        return np.array([getattr(e, name) for e in self.entries], dtype=float)

    @property
    def t(self):
        return self.column("t")

    @property
    def N(self):
        return self.column("N")

    def to_rows(self, fitted_C=None):
        N = self.N
        C = np.full(len(self), np.nan) if fitted_C is None else np.asarray(fitted_C, dtype=float)
        rows = []
        for k, e in enumerate(self.entries):
            d = asdict(e)
            rows.append([d[c] for c in CSV_COLUMNS[:-2]] + [N[k], C[k]])
        return rows

    def to_csv(self, path, fitted_C=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.to_rows(fitted_C):
                w.writerow([format_float(v) for v in row])

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            r = csv.DictReader(fh)
            for row in r:
                out.append(NormEntry(**{k: float(row[k]) for k in CSV_COLUMNS[:-2]}))
        return out


def format_float(v):
    """Fixed 17-significant-digit decimal, the CSV convention of the package."""
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# sup-norm estimates


def phase_sup_norms(density, t, x_lattice, xi_lattice, h=1e-3):
    """``(max f, max |grad_{x,xi} f|)`` over the product lattice, gradients by central differences."""
    x_lattice = np.atleast_2d(np.asarray(x_lattice, dtype=float))
    xi_lattice = np.atleast_2d(np.asarray(xi_lattice, dtype=float))
    if x_lattice.shape[0] == 0 or xi_lattice.shape[0] == 0:
        return 0.0, 0.0
    X = np.repeat(x_lattice, xi_lattice.shape[0], axis=0)
    Xi = np.tile(xi_lattice, (x_lattice.shape[0], 1))
    F = np.asarray(density(t, X, Xi), dtype=float)
    G = np.zeros((X.shape[0], 6))
    for a in range(6):
        e = np.zeros(6)
        e[a] = h
        G[:, a] = (density(t, X + e[:3], Xi + e[3:]) - density(t, X - e[:3], Xi - e[3:])) / (2 * h)
    return float(np.max(np.abs(F))), float(np.max(np.linalg.norm(G, axis=1)))


def field_sup_norms(E, B, h):
    """``(max |(E, B)|, max |grad (E, B)|)`` over a grid of spacing ``h``; arrays are (..., 3)."""
    EB = np.concatenate([np.asarray(E, dtype=float), np.asarray(B, dtype=float)], axis=-1)
    val = float(np.max(np.linalg.norm(EB, axis=-1)))
    if min(EB.shape[:3]) < 2:
        return val, 0.0
    grads = np.stack([np.gradient(EB, h, axis=a) for a in range(3)], axis=-1)
    return val, float(np.max(np.linalg.norm(grads.reshape(grads.shape[:3] + (-1,)), axis=-1)))


def potential_derivative_sups(slices, h, dt):
    """``(I_1, I_v, J_1, J_v)`` from the newest three slices of ``(int u, int v u)`` on a grid.

    ``slices`` holds arrays (nx, ny, nz, 4), newest last.  Space derivatives
    are centered, time derivatives one-sided of second order (first order
    when only two slices exist).  Each value is the max over the grid and the
    spacetime indices (and over the three components of ``int v u``).
    """
    U = [np.asarray(s, dtype=float) for s in slices[-3:]]
    cur = U[-1]
    if len(U) >= 3:
        dtU = (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * dt)
        dttU = (U[-1] - 2 * U[-2] + U[-3]) / dt**2
    elif len(U) == 2:
        dtU = (U[-1] - U[-2]) / dt
        dttU = np.zeros_like(cur)
    else:
        dtU = dttU = np.zeros_like(cur)
    first = [dtU] + [np.gradient(cur, h, axis=a) for a in range(3)]
    second = [dttU]
    for a in range(4):
        for b in range(a, 4):
            if a == 0 and b == 0:
                continue
            if a == 0:
                second.append(np.gradient(dtU, h, axis=b - 1))
            else:
                second.append(np.gradient(first[a], h, axis=b - 1))
    I = np.max(np.abs(np.stack(first)), axis=tuple(range(4)))
    J = np.max(np.abs(np.stack(second)), axis=tuple(range(4)))
    return float(I[0]), float(np.max(I[1:])), float(J[0]), float(np.max(J[1:]))


def sup_norm_estimates(t, density=None, x_lattice=None, xi_lattice=None, E=None, B=None, h=None,
                       potential_slices=None, dt=None, Rf=0.0, h_fd=1e-3) -> NormEntry:
    """One monitor entry from whatever slice data is available; missing parts stay zero."""
    f_sup = gradf = EB = gradEB = 0.0
    I1 = Iv = J1 = Jv = 0.0
    if density is not None:
        f_sup, gradf = phase_sup_norms(density, t, x_lattice, xi_lattice, h_fd)
    if E is not None:
        EB, gradEB = field_sup_norms(E, B if B is not None else np.zeros_like(E), h)
    if potential_slices:
        I1, Iv, J1, Jv = potential_derivative_sups(potential_slices, h, dt)
    return NormEntry(t=float(t), Rf=float(Rf), f_sup=f_sup, gradf_sup=gradf, EB_sup=EB, gradEB_sup=gradEB,
                     I_1=I1, I_v=Iv, J_1=J1, J_v=Jv)


@dataclass
class RepresentationCheck:
    """``I_m``/``J_m`` maxima from the derivative representations and from finite differences."""

    t: float
    I_1: float
    I_v: float
    J_1: float
    J_v: float
    I_1_fd: float
    I_v_fd: float
    J_1_fd: float
    J_v_fd: float
    max_relative_gap: float
    within_tolerance: bool


def representation_derivative_sups(engine, t, points, grad_f_norm, first=(0, 1, 2, 3), second=((1, 1),),
                                   weights=("1", "v1", "v2", "v3"), h=1e-2, rtol=2e-2):
    """``I_m`` and ``J_m`` at sample points from ``field_derivative_first/second``.

    The same maxima are formed from centered differences of ``int m u dxi``
    (fourth order, step ``h``) and the largest relative gap is reported; it
    is compared to ``rtol`` but never reconciled.  ``second`` lists the
    ``(i, j)`` pairs entering ``J_m``.
    """
    from .fields import fd_first, fd_second

    points = np.atleast_2d(np.asarray(points, dtype=float))
    rep = {("1", 0): [], ("1", 1): [], ("v", 0): [], ("v", 1): []}
    fd = {k: [] for k in rep}
    for wname in weights:
        key = "1" if wname == "1" else "v"
        spec = engine.spec.with_weight(wname)

        def U(p, spec=spec):
            return engine.weighted_potential(spec, p[0], p[1:][None])[0]

        for x in points:
            p = np.r_[t, x]
            for j in first:
                rep[key, 0].append(engine.field_derivative_first(spec, j, t, x).total)
                fd[key, 0].append(fd_first(U, p, j, h))
            for i, j in second:
                rep[key, 1].append(engine.field_derivative_second(spec, i, j, t, x, grad_f_norm).total)
                fd[key, 1].append(fd_second(U, p, i, j, 2 * h))
    sup = {k: float(np.max(np.abs(v), initial=0.0)) for k, v in rep.items()}
    sup_fd = {k: float(np.max(np.abs(v), initial=0.0)) for k, v in fd.items()}
    # gaps are measured against the largest finite-difference value of the same family
    gap = 0.0
    for k in rep:
        if rep[k] and sup_fd[k] > 0:
            gap = max(gap, float(np.max(np.abs(np.subtract(rep[k], fd[k])))) / sup_fd[k])
        elif rep[k] and sup[k] > 0:
            gap = np.inf
    return RepresentationCheck(t=float(t), I_1=sup["1", 0], I_v=sup["v", 0], J_1=sup["1", 1], J_v=sup["v", 1],
                               I_1_fd=sup_fd["1", 0], I_v_fd=sup_fd["v", 0], J_1_fd=sup_fd["1", 1],
                               J_v_fd=sup_fd["v", 1],
                               max_relative_gap=float(gap), within_tolerance=bool(gap <= rtol))


# ---------------------------------------------------------------------------
# Gronwall fits


def _trapezoid_cumulative(t, g):
    out = np.zeros_like(g)
    out[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))
    return out


def _check_uniform(t):
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise ValueError("a Gronwall fit needs at least two samples")
    d = np.diff(t)
    if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * max(abs(d[0]), 1e-300):
        raise ValueError("samples must lie on a uniform increasing time grid")
    return t


def _smallest_constant(lhs, base, integral):
    """Smallest ``C >= 0`` with ``lhs <= base + C integral`` at every sample, and per-sample requirements."""
    need = np.zeros_like(lhs)
    excess = lhs - base
    pos = excess > 0
    with np.errstate(divide="ignore"):
        need[pos] = np.where(integral[pos] > 0, excess[pos] / np.where(integral[pos] > 0, integral[pos], 1.0), np.inf)
    return float(np.max(need, initial=0.0)), need


@dataclass
class GronwallReport:
    C: float
    required: list
    margins: list
    passes: bool
    diverging: bool
    implied_bound: float
    horizon: float


def log_gronwall_check(t, N, tau=None, growth_factor=2.0) -> GronwallReport:
    """Fit ``N(t) <= N(0) + C int_0^t (1 + ln_+ N) N ds`` (trapezoid rule) on a uniform grid.

    The smallest admissible ``C`` and the per-sample requirement ``C_k`` are
    reported.  Comparison with ``y' = C (1 + ln y) y``, ``y(0) = max(N(0), 1)``
    gives the double-exponential bound ``exp((1 + ln y(0)) e^{C tau} - 1)``.
    The series is flagged as diverging when the largest requirement sits at
    the last sample and exceeds ``growth_factor`` times the requirement at
    half the horizon: a finite constant would stop growing.
    """
    t = _check_uniform(t)
    N = np.asarray(N, dtype=float)
    if N.shape != t.shape:
        raise ValueError("t and N must have the same length")
    if np.any(N < 0) or not np.all(np.isfinite(N)):
        raise ValueError("N must be finite and nonnegative")
    integral = _trapezoid_cumulative(t, (1.0 + ln_plus(N)) * N)
    C, need = _smallest_constant(N, N[0], integral)
    margins = N[0] + C * integral - N
    tau = float(t[-1] if tau is None else tau)
    half = int(np.searchsorted(t, t[0] + 0.5 * (t[-1] - t[0])))
    diverging = bool(np.isinf(C) or (C > 0 and int(np.argmax(need)) == need.size - 1
                                     and need[-1] > growth_factor * need[max(half, 1)]))
    y0 = max(N[0], 1.0)
    with np.errstate(over="ignore"):
        bound = float(np.exp((1.0 + np.log(y0)) * np.exp(C * (tau - t[0])) - 1.0)) if np.isfinite(C) else np.inf
    return GronwallReport(C=C, required=need.tolist(), margins=margins.tolist(),
                          passes=bool(np.isfinite(C) and np.all(margins >= -1e-12 * np.maximum(N, 1.0))),
                          diverging=diverging, implied_bound=bound, horizon=tau)


def running_log_gronwall(t, N):
    """Fitted ``C`` using the samples up to each time (the ``fitted_C`` CSV column)."""
    t = np.asarray(t, dtype=float)
    N = np.asarray(N, dtype=float)
    out = np.zeros(t.size)
    if t.size < 2:
        return out
    integral = _trapezoid_cumulative(t, (1.0 + ln_plus(N)) * N)
    _, need = _smallest_constant(N, N[0], integral)
    return np.maximum.accumulate(need)


def fit_field_constants(series: NormSeries):
    """Empirical constants of the first- and second-derivative inequalities.

    * ``I_m <= C (1 + int_0^t (I_1 + I_v))`` for m = 1 and m = v,
    * ``J_1 + J_v <= C (1 + ln_+ N)``,
    * ``|grad (E, B)| <= C (1 + ln_+ N)``.
    """
    if len(series) == 0:
        return {}
    t = series.t
    I1, Iv = series.column("I_1"), series.column("I_v")
    integral = _trapezoid_cumulative(t, I1 + Iv) if t.size > 1 else np.zeros_like(t)
    denom_I = 1.0 + integral
    logN = 1.0 + ln_plus(series.N)
    J = series.column("J_1") + series.column("J_v")
    return {
        "I_1": float(np.max(I1 / denom_I)),
        "I_v": float(np.max(Iv / denom_I)),
        "J_1_plus_J_v": float(np.max(J / logN)),
        "gradEB": float(np.max(series.column("gradEB_sup") / logN)),
    }


# ---------------------------------------------------------------------------
# continuation report


def continuation_report(series: NormSeries, tau, rel_tol=1e-8):
    """Empirical status of the continuation criterion: pure reporting, no proof.

    ``status`` is one of ``"zero data"``, ``"norms diverging"``,
    ``"support growing"`` or ``"R_f bounded & norms bounded"``.
    """
    if len(series) == 0:
        raise ValueError("empty monitor series")
    t = series.t
    Rf = series.column("Rf")
    W = series.column("f_sup") + series.column("gradf_sup") + series.column("EB_sup") + series.column("gradEB_sup")
    N = series.N
    everything = np.concatenate([Rf, W, series.column("I_1"), series.column("I_v"), series.column("J_1"),
                                 series.column("J_v")])
    growth = float(Rf[-1] - Rf[0])
    slope = float(np.polyfit(t, Rf, 1)[0]) if t.size > 1 else 0.0
    gron = None
    if t.size >= 2:
        try:
            gron = log_gronwall_check(t, N, tau)
        except ValueError:
            gron = None
    if not np.any(everything):
        status = "zero data"
    elif gron is not None and gron.diverging:
        status = "norms diverging"
    elif growth > rel_tol * max(Rf[0], 1.0):
        status = "support growing"
    else:
        status = "R_f bounded & norms bounded"
    return {
        "status": status,
        "horizon": float(tau),
        "samples": int(t.size),
        "t_last": float(t[-1]),
        "Rf_initial": float(Rf[0]),
        "Rf_sup": float(np.max(Rf)),
        "Rf_growth": growth,
        "Rf_slope": slope,
        "W1inf_sup": float(np.max(W)),
        "f_sup": float(np.max(series.column("f_sup"))),
        "N_final": float(N[-1]),
        "gronwall": None if gron is None else {k: v for k, v in asdict(gron).items()
                                               if k not in ("required", "margins")},
        "field_constants": fit_field_constants(series),
        "lower_bounds": True,
    }


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def series_from_ensemble(times, radii):
    """A series carrying only ``R_f`` (e.g. from a pushed ensemble)."""
    out = NormSeries()
    for t, r in zip(times, radii):
        out.append(NormEntry(t=float(t), Rf=float(r)))
    return out


__all__ = ["CSV_COLUMNS", "NormEntry", "NormSeries", "GronwallReport", "ln_plus", "phase_sup_norms",
           "field_sup_norms", "potential_derivative_sups", "sup_norm_estimates", "log_gronwall_check",
           "running_log_gronwall", "fit_field_constants", "continuation_report", "write_report",
           "series_from_ensemble", "format_float", "RepresentationCheck",
           "representation_derivative_sups"]
