"""Command-line front end: ``twomode {poles,critical,propagate,validate}``.

Every command writes CSV (stdout or ``--out``) whose ``#`` header echoes the
full run configuration, so a header can be parsed back into the same
:class:`RunConfig`.  Exit codes: 0 success, 1 validation failure, 2 bad
input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from itertools import product

import numpy as np

from . import boundstates as bs
from . import csvio
from . import mastereq as me
from . import oracle
from . import propagator as pg
from .errors import BracketError, QuadratureError, SingularPropagatorError
from .spectral import BathParams

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("poles", "critical", "propagate", "validate")
SWEEPABLE = {
    "critical": ("delta", "kappa", "lambda"),
    "propagate": ("delta", "kappa", "eta", "lambda", "s", "omega_c", "temperature"),
}
DEFAULT_TOLS = {
    "closed": 1e-10,       # eta = 0 against exp(-i omega_s t)
    "route": 1e-3,         # volterra against spectral
    "completeness": 1e-3,
    "residue": 1e-4,
    "critical": 1e-6,      # bisection against the closed form
    "oracle": 1e-2,
    "fluctuation": 1e-3,   # v_from_u against v_volterra
    "moments": 1e-3,
    "coefficients": 1e-12,
    "convergence": 2.0,    # minimum error ratio when dt halves
}
EXACT_FLOOR = 1e-12
_NUMERICAL = (QuadratureError, BracketError, SingularPropagatorError, np.linalg.LinAlgError, FloatingPointError)


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class Sweep:
    param: str
    start: float
    stop: float
    steps: int

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        parts = text.strip().split(":")
        if len(parts) != 4:
            raise InputError(f"sweep must be param:start:stop:steps, got {text!r}")
        try:
            steps = int(parts[3])
            sweep = cls(_canonical(parts[0]), float(parts[1]), float(parts[2]), steps)
        except ValueError as exc:
            raise InputError(f"bad sweep {text!r}: {exc}") from None
        if steps < 1:
            raise InputError(f"sweep needs at least one step, got {steps}")
        return sweep

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)

    def __str__(self):
        return f"{self.param}:{csvio.fmt(self.start)}:{csvio.fmt(self.stop)}:{self.steps}"


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on; ``omega1``/``omega2`` or ``omega0``/``delta`` style."""

    command: str = "propagate"
    omega0: float | None = None
    delta: float | None = None
    omega1: float | None = None
    omega2: float | None = None
    kappa: float = 0.25
    eta: float = 0.3
    s: float = 1.0
    omega_c: float = 5.0
    lam: float = 1.0
    temperature: float = 0.0
    t_end: float = 50.0
    dt: float | None = None
    omega_min: float = -5.0
    points: int = 2001
    sweeps: tuple = ()
    tol: tuple = ()
    out: str | None = field(default=None, compare=False)
    jobs: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        bare = self.omega1 is not None or self.omega2 is not None
        detuned = self.omega0 is not None or self.delta is not None
        if bare and detuned:
            raise InputError("give either omega1/omega2 or omega0/delta, not both")
        if bare and (self.omega1 is None or self.omega2 is None):
            raise InputError("omega1 and omega2 must be given together")
        if not bare:
            object.__setattr__(self, "omega0", 1.0 if self.omega0 is None else self.omega0)
            object.__setattr__(self, "delta", 0.25 if self.delta is None else self.delta)
        unknown = [k for k, _ in self.tol if k not in DEFAULT_TOLS]
        if unknown:
            raise InputError(f"unknown tolerance(s) {unknown}; known: {sorted(DEFAULT_TOLS)}")
        allowed = SWEEPABLE.get(self.command, ())
        for sw in self.sweeps:
            if sw.param not in allowed:
                raise InputError(f"{self.command} cannot sweep {sw.param!r}; allowed: {allowed}")
        if self.t_end < 0 or (self.dt is not None and self.dt <= 0):
            raise InputError("need t_end >= 0 and dt > 0")
        if self.points < 2 or self.omega_min >= 0:
            raise InputError("pole scan needs points >= 2 and omega_min < 0")
        if self.jobs < 1:
            raise InputError(f"jobs must be >= 1, got {self.jobs}")
        # re-validate physics now so bad input fails before any work
        self.system()
        self.bath()

    @property
    def bare_style(self) -> bool:
        return self.omega1 is not None

    def system(self) -> bs.SystemParams:
        if self.bare_style:
            return bs.SystemParams(self.omega1, self.omega2, self.kappa)
        return bs.SystemParams.from_detuning(self.omega0, self.delta, self.kappa)

    def bath(self) -> BathParams:
        return BathParams(self.eta, self.s, self.omega_c, self.lam, self.temperature)

    def tolerance(self, name: str) -> float:
        return dict(self.tol).get(name, DEFAULT_TOLS[name])

    def with_param(self, name: str, value: float) -> "RunConfig":
        key = "lam" if name == "lambda" else name
        if key == "delta" and self.bare_style:
            w0 = 0.5 * (self.omega1 + self.omega2)
            return replace(self, omega1=w0 - value, omega2=w0 + value, sweeps=())
        return replace(self, sweeps=(), **{key: value})

    def header(self) -> dict:
        """Ordered ``key -> text`` pairs; :func:`config_from_header` inverts it."""
        out = {"command": self.command}
        if self.bare_style:
            out.update(omega1=csvio.fmt(self.omega1), omega2=csvio.fmt(self.omega2))
        else:
            out.update(omega0=csvio.fmt(self.omega0), delta=csvio.fmt(self.delta))
        for key in ("kappa", "eta", "s", "omega_c"):
            out[key] = csvio.fmt(getattr(self, key))
        out["lambda"] = csvio.fmt(self.lam)
        out["temperature"] = csvio.fmt(self.temperature)
        out["t_end"] = csvio.fmt(self.t_end)
        out["dt"] = "auto" if self.dt is None else csvio.fmt(self.dt)
        out["omega_min"] = csvio.fmt(self.omega_min)
        out["points"] = str(self.points)
        out["sweep"] = ";".join(str(sw) for sw in self.sweeps)
        out["tol"] = ";".join(f"{k}={csvio.fmt(v)}" for k, v in self.tol)
        return out


_ALIASES = {"lambda": "lam", "omega-c": "omega_c", "t-end": "t_end", "omega-min": "omega_min"}
_FLOATS = {"omega0", "delta", "omega1", "omega2", "kappa", "eta", "s", "omega_c", "lam", "temperature",
           "t_end", "dt", "omega_min"}


def _canonical(name: str) -> str:
    name = name.strip()
    if name in ("lam", "lambda"):
        return "lambda"
    return name.replace("-", "_")


def _parse_tol(text: str) -> list[tuple[str, float]]:
    out = []
    for item in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in item:
            raise InputError(f"tolerance must be name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out.append((k.strip(), float(v)))
        except ValueError:
            raise InputError(f"bad tolerance value in {item!r}") from None
    return out


def _apply_pairs(values: dict, pairs):
    """Fold ``(key, text)`` pairs into keyword arguments of :class:`RunConfig`."""
    sweeps, tols = list(values.pop("sweeps", ())), list(values.pop("tol", ()))
    for raw_key, raw in pairs:
        key = _ALIASES.get(raw_key, raw_key.replace("-", "_"))
        raw = raw.strip()
        if key == "sweep":
            sweeps += [Sweep.parse(p) for p in raw.split(";") if p.strip()]
        elif key == "tol":
            tols += _parse_tol(raw)
        elif key == "command":
            values["command"] = raw
        elif key in ("points", "jobs"):
            values[key] = int(raw)
        elif key == "out":
            values["out"] = raw
        elif key == "dt" and raw == "auto":
            values["dt"] = None
        elif key in _FLOATS:
            values[key] = float(raw)
        else:
            raise InputError(f"unknown configuration key {raw_key!r}")
    values["sweeps"] = tuple(sweeps)
    values["tol"] = tuple(tols)
    return values


def read_config_file(path: str) -> list[tuple[str, str]]:
    pairs = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{n}: expected key = value")
            k, v = line.split("=", 1)
            pairs.append((k.strip(), v.strip()))
    return pairs


def config_from_header(text: str) -> RunConfig:
    """Rebuild the :class:`RunConfig` recorded in a CSV header."""
    head = csvio.read_header(text)
    keys = {f.name for f in fields(RunConfig)} | {"lambda", "sweep"}
    pairs = [(k, v) for k, v in head.items() if _ALIASES.get(k, k) in keys or k in keys]
    try:
        return RunConfig(**_apply_pairs({}, pairs))
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("system")
    g.add_argument("--omega0", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--omega1", type=float)
    g.add_argument("--omega2", type=float)
    g.add_argument("--kappa", type=float)
    b = common.add_argument_group("bath")
    b.add_argument("--eta", type=float)
    b.add_argument("--s", type=float)
    b.add_argument("--omega-c", dest="omega_c", type=float)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--temperature", type=float)
    r = common.add_argument_group("run")
    r.add_argument("--t-end", dest="t_end", type=float)
    r.add_argument("--dt", type=float)
    r.add_argument("--omega-min", dest="omega_min", type=float, help="lower end of the pole scan")
    r.add_argument("--points", type=int, help="number of pole-scan frequencies")
    r.add_argument("--sweep", action="append", default=[], metavar="PARAM:START:STOP:STEPS")
    r.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
    r.add_argument("--out", help="output path (default: stdout)")
    r.add_argument("--jobs", type=int, help="worker processes (default: number of CPUs)")
    r.add_argument("--config", help="flat key = value file; command-line flags win")

    parser = argparse.ArgumentParser(prog="twomode", description="Two-mode open-system dynamics with Ohmic-type baths.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("poles", parents=[common], help="1/det U~(omega) scan and bound states")
    sub.add_parser("critical", parents=[common], help="critical couplings over a sweep grid")
    sub.add_parser("propagate", parents=[common], help="U, V and localized part on a time grid")
    sub.add_parser("validate", parents=[common], help="cross-route checks at reduced scale")
    return parser


def parse_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    pairs = read_config_file(args.config) if args.config else []
    cli_pairs = []
    for key in ("omega0", "delta", "omega1", "omega2", "kappa", "eta", "s", "omega_c", "lam",
                "temperature", "t_end", "dt", "omega_min", "points", "out", "jobs"):
        val = getattr(args, key)
        if val is not None:
            cli_pairs.append((key, repr(val) if isinstance(val, float) else str(val)))
    flagged = {k for k, _ in cli_pairs}
    if flagged & {"omega1", "omega2"}:
        pairs = [(k, v) for k, v in pairs if _ALIASES.get(k, k) not in ("omega0", "delta")]
    if flagged & {"omega0", "delta"}:
        pairs = [(k, v) for k, v in pairs if k not in ("omega1", "omega2")]
    # flags override file values; repeatable options accumulate
    file_vals = _apply_pairs({}, [p for p in pairs if _ALIASES.get(p[0], p[0].replace("-", "_")) not in flagged])
    cli_pairs += [("sweep", s) for s in args.sweep] + [("tol", t) for t in args.tol]
    values = _apply_pairs(file_vals, cli_pairs)
    values["command"] = args.command
    values.setdefault("jobs", os.cpu_count() or 1)
    return RunConfig(**values)


# --------------------------------------------------------------------------
# commands


def cmd_poles(cfg: RunConfig, out) -> int:
    system, bath = cfg.system(), cfg.bath()
    omegas = np.linspace(cfg.omega_min, 0.0, cfg.points, endpoint=False)
    rows = [(w, bs.inverse_determinant(w, system, bath)) for w in omegas]
    states = bs.find_bound_states(system, bath)
    footer = {"bound_states": len(states)}
    for k, st in enumerate(states):
        footer[f"omega_l_{k}"] = csvio.fmt(st.omega_l)
        footer[f"branch_{k}"] = st.branch
        footer[f"residue_{k}"] = " ".join(csvio.fmt(x) for x in csvio.flatten_complex(st.residue[None])[0])
    csvio.write_table(out, cfg.header(), ["omega", "inv_det"], rows, footer)
    return EXIT_OK


def cmd_critical(cfg: RunConfig, out) -> int:
    sy = cfg.system()
    grid = {"delta": [cfg.delta if cfg.delta is not None else sy.delta], "kappa": [cfg.kappa], "lambda": [cfg.lam]}
    for sw in cfg.sweeps:
        grid[sw.param] = sw.values
    rows = bs.critical_coupling_sweep(grid["delta"], grid["kappa"], grid["lambda"], cfg.s, cfg.omega_c,
                                      sy.omega0, jobs=cfg.jobs)
    cols = ["delta", "kappa", "lambda", "s", "omega_c", "eta_c_minus", "eta_c_plus", "status"]
    body = [(r.delta, r.kappa, r.lam, r.s, r.omega_c, r.eta_c_minus, r.eta_c_plus, r.status) for r in rows]
    csvio.write_table(out, cfg.header(), cols, body)
    return EXIT_OK if any(r.status == "ok" for r in rows) else EXIT_NUMERICAL


SPECTRAL_SAMPLES = 2000


def propagate_point(cfg: RunConfig) -> dict:
    """Trajectory data for one parameter point (runs in a worker for sweeps)."""
    system, bath = cfg.system(), cfg.bath()
    traj = pg.u_volterra(system, bath, cfg.t_end, cfg.dt)
    traj = pg.v_from_u(traj, bath)
    states = bs.find_bound_states(system, bath)
    n = traj.times.size
    spectral = np.full((n, 2, 2), np.nan + 0j)
    local = np.full((n, 2, 2), np.nan + 0j)
    stride = max(1, int(np.ceil((n - 1) / SPECTRAL_SAMPLES)))
    if states:
        local = pg.u_localized(states, traj.times)
        spectral[::stride] = pg.u_spectral(system, bath, states, traj.times[::stride]).u
    info = {"u_method": traj.method, "v_method": "v_from_u", "dt_used": csvio.fmt(traj.dt),
            "spectral_stride": stride if states else 0, "bound_states": len(states)}
    for k, st in enumerate(states):
        info[f"omega_l_{k}"] = csvio.fmt(st.omega_l)
    if len(states) == 2:
        info["omega_loc"] = csvio.fmt(pg.oscillation_frequency(states).value)
    cols = np.hstack([traj.times[:, None], csvio.flatten_complex(traj.u), csvio.flatten_complex(traj.v),
                      csvio.flatten_complex(spectral), csvio.flatten_complex(local)])
    return {"info": info, "data": cols}


def _propagate_job(args):
    cfg, assignment = args
    for name, val in assignment:
        cfg = cfg.with_param(name, val)
    return propagate_point(cfg)


def cmd_propagate(cfg: RunConfig, out) -> int:
    names = [sw.param for sw in cfg.sweeps]
    assignments = [tuple(zip(names, vals)) for vals in product(*(sw.values for sw in cfg.sweeps))]
    jobs = [(cfg, a) for a in assignments]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_propagate_job, jobs))
    else:
        results = [_propagate_job(j) for j in jobs]
    header = cfg.header()
    if len(results) == 1:
        header.update(results[0]["info"])
    else:
        for k, (a, r) in enumerate(zip(assignments, results)):
            tag = ",".join(f"{n}={csvio.fmt(v)}" for n, v in a)
            header[f"point_{k}"] = tag + " " + " ".join(f"{key}={val}" for key, val in r["info"].items())
    cols = names + ["t"] + csvio.complex_columns("U") + csvio.complex_columns("V") \
        + csvio.complex_columns("Uspec") + csvio.complex_columns("Uloc")

    def rows():
        for a, r in zip(assignments, results):
            lead = [v for _, v in a]
            for row in r["data"]:
                yield lead + list(row)

    csvio.write_table(out, header, cols, rows())
    return EXIT_OK


def run_checks(cfg: RunConfig) -> list[tuple[str, bool, float, float]]:
    """Reduced-scale cross-route checks; ``(name, passed, value, tolerance)`` per check."""
    system, bath = cfg.system(), cfg.bath()
    dt = pg.default_dt(bath) if cfg.dt is None else cfg.dt
    t_short = 10.0
    t_route = 20.0
    hot = bath if bath.temperature > 0 else BathParams(bath.eta, bath.s, bath.omega_c, bath.lam, 0.5)
    results = []

    def check(name, tol_name, fn, greater=False):
        tol = cfg.tolerance(tol_name)
        try:
            val = float(fn())
            ok = val >= tol if greater else val <= tol
        except (ValueError, *_NUMERICAL) as exc:
            print(f"  {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
            val, ok = float("nan"), False
        results.append((name, bool(ok), val, tol))

    def grid_end(t):
        return dt * int(round(t / dt))

    def closed():
        free = bath.with_eta(0.0)
        tr = pg.u_volterra(system, free, grid_end(t_route), dt)
        return np.abs(tr.u - pg.exact_closed(system, tr.times)).max()

    ladder = {}

    def self_differences():
        if not ladder:
            t = grid_end(t_short)
            runs = [pg.u_volterra(system, bath, t, dt / 2 ** k).u[:: 2 ** k] for k in range(3)]
            ladder["e"] = (np.abs(runs[0] - runs[1]).max(), np.abs(runs[1] - runs[2]).max())
        return ladder["e"]

    def convergence():
        e1, e2 = self_differences()
        # an uncoupled run is exact to roundoff, so there is no error to halve
        return e1 / e2 if e1 > EXACT_FLOOR else np.inf

    states = bs.find_bound_states(system, bath)

    def route():
        tr = pg.u_volterra(system, bath, grid_end(t_route), dt)
        sp = pg.u_spectral(system, bath, states, tr.times[::10])
        return np.abs(tr.u[::10] - sp.u).max()

    def completeness():
        return np.abs(pg.completeness(system, bath, states) - np.eye(2)).max()

    def residues():
        # coincident branches share one pole of U~; compare their summed residue
        poles = {}
        for st in states:
            key = next((w for w in poles if abs(w - st.omega_l) < 1e-9), st.omega_l)
            poles[key] = poles.get(key, 0) + st.residue
        return max((np.abs(z - bs.numerical_residue(w, system, bath)).max() for w, z in poles.items()),
                   default=0.0)

    def critical():
        sym = BathParams(0.0, bath.s, bath.omega_c, 1.0)
        return max(abs(bs.critical_coupling(b, system, sym, "bisection") - bs.critical_coupling(b, system, sym, "closed"))
                   for b in bs.BRANCHES)

    hot_traj = {}

    def hot_run():
        if not hot_traj:
            tr = pg.u_volterra(system, hot, grid_end(t_short), dt)
            hot_traj["v"] = pg.v_from_u(tr, hot)
        return hot_traj["v"]

    def oracle_u():
        tr = hot_run()
        ev = oracle.ExactEvolution(system, oracle.discretize(hot, 800, grid="quadratic"))
        hot_traj["oracle"] = ev
        return np.abs(ev.u(tr.times[::10]) - tr.u[::10]).max()

    def oracle_v():
        tr = hot_run()
        ev = hot_traj.get("oracle") or oracle.ExactEvolution(system, oracle.discretize(hot, 800, grid="quadratic"))
        return np.abs(ev.v(tr.times[::10], hot.temperature) - tr.v[::10]).max()

    def fluctuation():
        tr = hot_run()
        alt = pg.v_volterra(system, hot, tr)
        return np.abs(alt.v - tr.v).max()

    def moments():
        tr = hot_run()
        co = me.coefficients(tr, singular="interpolate")
        n0 = np.diag([1.0, 0.0])
        return np.abs(me.evolve_moments(co, n0).n - me.evolve_moments(tr, n0).n).max()

    def coefficients_free():
        free = bath.with_eta(0.0)
        co = me.coefficients(pg.u_volterra(system, free, grid_end(t_short), dt))
        return max(np.abs(co.omega_tilde - system.matrix).max(), np.abs(co.gamma).max(), np.abs(co.gamma_tilde).max())

    check("eta0_closed_form", "closed", closed)
    check("dt_convergence_ratio", "convergence", convergence, greater=True)
    check("dt_self_difference", "route", lambda: self_differences()[0])
    check("route_volterra_spectral", "route", route)
    if states:
        check("completeness", "completeness", completeness)
        check("residues", "residue", residues)
    check("critical_closed_form", "critical", critical)
    check("oracle_u", "oracle", oracle_u)
    check("oracle_v", "oracle", oracle_v)
    check("v_routes", "fluctuation", fluctuation)
    check("moment_routes", "moments", moments)
    check("eta0_coefficients", "coefficients", coefficients_free)
    return results


def cmd_validate(cfg: RunConfig, out) -> int:
    results = run_checks(cfg)
    rows = [(name, "pass" if ok else "FAIL", val, tol) for name, ok, val, tol in results]
    csvio.write_table(out, cfg.header(), ["check", "result", "value", "tolerance"], rows)
    for name, ok, val, tol in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {val:.3e} (tol {tol:.1e})", file=sys.stderr)
    return EXIT_OK if all(ok for _, ok, _, _ in results) else EXIT_FAILED


_COMMANDS = {"poles": cmd_poles, "critical": cmd_critical, "propagate": cmd_propagate, "validate": cmd_validate}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if cfg.out:
            with open(cfg.out, "w", newline="\n") as fh:
                return _COMMANDS[cfg.command](cfg, fh)
        return _COMMANDS[cfg.command](cfg, sys.stdout)
    except _NUMERICAL as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
