"""Run configuration: a ``key = value`` file with ``[section]`` headers.

Schema (defaults in parentheses)::

    [run]
    mode            verify-kernels | verify-identities | fields | simulate | report  (simulate)
    seed            integer seed for sampled velocities and test functions  (1)
    threads         thread cap, 0 = environment or all cores  (0)
    out             output directory  (out)
    series          directory with a recorded series, used by mode report  ()

    [quadrature]
    sphere_order    Gauss-Legendre order in cos(theta); azimuth uses twice as many  (32)
    time_order      Gauss-Legendre order along the cone lag  (16)
    momentum_order  Gauss-Legendre order per momentum axis  (16)

    [grid]
    n_grid          grid points per axis  (16)
    half_width      grid covers [-half_width, half_width]^3  (1.5)

    [time]
    dt              time step  (0.025)
    horizon         final time tau; horizon / dt must be an integer  (0.5)

    [data]
    profile         gaussian-bump | ring | zero  (gaussian-bump)
    amplitude, x_radius, x_power, xi_radius, xi_center  profile parameters

    [simulate]
    sim_momentum_order  momentum Gauss-Legendre order of the self-consistent run  (12)
    sim_sphere_order    sphere order of the retarded sums in that run  (12)
    ensemble            number of pushed phase points tracking R_f  (400)
    diagnostics         constraint-residual diagnostics after the run  (true)

    [sampling]
    n_velocities, n_samples, v_max (< 1)

    [tolerances]
    field_first, field_second, max_principle

``#`` and ``;`` start comments.  Unknown sections or keys and out-of-range
values raise :class:`ConfigError` carrying the line number.
"""
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional

MODES = ("verify-kernels", "verify-identities", "fields", "simulate", "report")
PROFILES = ("gaussian-bump", "ring", "zero")
THREADS_ENV = "LWVLASOV_THREADS"


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line


def _triple(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError("expected three numbers")
    return tuple(float(p) for p in parts)


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true or false")


# key -> (section, parser)
SCHEMA = {
    "mode": ("run", str), "seed": ("run", int), "threads": ("run", int), "out": ("run", str),
    "series": ("run", str),
    "sphere_order": ("quadrature", int), "time_order": ("quadrature", int), "momentum_order": ("quadrature", int),
    "n_grid": ("grid", int), "half_width": ("grid", float),
    "dt": ("time", float), "horizon": ("time", float),
    "profile": ("data", str), "amplitude": ("data", float), "x_radius": ("data", float), "x_power": ("data", int),
    "xi_radius": ("data", float), "xi_center": ("data", _triple),
    "sim_momentum_order": ("simulate", int), "sim_sphere_order": ("simulate", int), "ensemble": ("simulate", int),
    "diagnostics": ("simulate", _bool),
    "n_velocities": ("sampling", int), "n_samples": ("sampling", int), "v_max": ("sampling", float),
    "field_first": ("tolerances", float), "field_second": ("tolerances", float),
    "max_principle": ("tolerances", float),
}


@dataclass
class RunConfig:
    mode: str = "simulate"
    seed: int = 1
    threads: int = 0
    out: str = "out"
    series: str = ""
    sphere_order: int = 32
    time_order: int = 16
    momentum_order: int = 16
    n_grid: int = 16
    half_width: float = 1.5
    dt: float = 0.025
    horizon: float = 0.5
    profile: str = "gaussian-bump"
    amplitude: float = 0.5
    x_radius: float = 0.8
    x_power: int = 5
    xi_radius: float = 0.6
    xi_center: tuple = (0.3, 0.0, 0.0)
    sim_momentum_order: int = 12
    sim_sphere_order: int = 12
    ensemble: int = 400
    diagnostics: bool = True
    n_velocities: int = 50
    n_samples: int = 10
    v_max: float = 0.9
    field_first: float = 1e-3
    field_second: float = 1e-2
    max_principle: float = 1e-6

    def problems(self):
        """``(key, message)`` for every violated range constraint."""
        out = []
        if self.mode not in MODES:
            out.append(("mode", f"mode must be one of {', '.join(MODES)}"))
        if self.profile not in PROFILES:
            out.append(("profile", f"profile must be one of {', '.join(PROFILES)}"))
        for k in ("sphere_order", "time_order", "momentum_order", "sim_momentum_order", "sim_sphere_order"):
            if getattr(self, k) < 4:
                out.append((k, f"{k} must be >= 4"))
        if not self.dt > 0:
            out.append(("dt", "dt must be > 0"))
        if not self.horizon > 0:
            out.append(("horizon", "horizon must be > 0"))
        elif self.dt > 0:
            steps = self.horizon / self.dt
            if abs(steps - round(steps)) > 1e-9 * steps or round(steps) < 7:
                out.append(("dt", "horizon / dt must be an integer >= 7"))
        if not 0 < self.v_max < 1:
            out.append(("v_max", "v_max must lie in (0, 1)"))
        if self.n_grid < 5:
            out.append(("n_grid", "n_grid must be >= 5"))
        for k in ("half_width", "x_radius", "xi_radius", "field_first", "field_second", "max_principle"):
            if not getattr(self, k) > 0:
                out.append((k, f"{k} must be > 0"))
        if self.amplitude < 0:
            out.append(("amplitude", "amplitude must be >= 0"))
        for k in ("n_velocities", "n_samples", "ensemble"):
            if getattr(self, k) < 1:
                out.append((k, f"{k} must be >= 1"))
        if self.threads < 0:
            out.append(("threads", "threads must be >= 0"))
        if self.x_power < 0:
            out.append(("x_power", "x_power must be >= 0"))
        return out

    def validate(self):
        bad = self.problems()
        if bad:
            raise ConfigError(bad[0][1])
        return self

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    def echo(self):
        """Plain-data copy for manifests."""
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def to_text(self):
        """Serialize in the file format read by :func:`load_config`."""
        sections = {}
        for f in fields(self):
            sections.setdefault(SCHEMA[f.name][0], []).append(f.name)
        lines = []
        for sec, keys in sections.items():
            lines.append(f"[{sec}]")
            for k in keys:
                v = getattr(self, k)
                if isinstance(v, tuple):
                    v = ", ".join(repr(float(a)) for a in v)
                elif isinstance(v, bool):
                    v = str(v).lower()
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


def parse_config(text, path=None) -> RunConfig:
    values, where = {}, {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", n, path)
            section = line[1:-1].strip()
            if section not in {s for s, _ in SCHEMA.values()}:
                raise ConfigError(f"unknown section [{section}]", n, path)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n, path)
        key, val = (a.strip() for a in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", n, path)
        sec, parse = SCHEMA[key]
        if section is not None and section != sec:
            raise ConfigError(f"key {key!r} belongs to section [{sec}], not [{section}]", n, path)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", n, path)
        try:
            values[key] = parse(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {val!r} ({exc})", n, path) from None
        where[key] = n
    cfg = RunConfig(**values)
    bad = cfg.problems()
    if bad:
        key, msg = bad[0]
        raise ConfigError(msg, where.get(key), path)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    """Read and validate a configuration file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path=path) from None
    return parse_config(text, path)


def default_threads():
    """Thread cap from the environment, 0 meaning no cap."""
    val = os.environ.get(THREADS_ENV, "")
    try:
        return max(int(val), 0)
    except ValueError:
        return 0
