"""Command-line runs with persisted, reproducible artifacts.

Every run validates its configuration against :data:`SCHEMA`, then writes a
directory holding ``config.json``, ``summary.json`` and one table per output
(CSV with 17 significant digits, or JSON).  Exit codes: 0 success, 1 invalid
configuration (nothing written), 2 numerical failure (``summary.json`` carries
the error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
CSV_FORMAT = "%.17g"


class ConfigError(ValueError):
    """Configuration rejected before any computation."""


class ReportError(ValueError):
    """Run directories that cannot be merged into one table."""


# --- parameters and schema --------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    flag: str
    schema: dict
    help: str

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


_POS = {"type": "number", "exclusiveMinimum": 0}

PARAMS: Dict[str, Param] = {p.dest: p for p in [
    Param("--n", {"type": "integer", "minimum": 3, "not": {"multipleOf": 2}}, "ambient dimension (odd)"),
    Param("--N", {"type": "integer", "minimum": 16}, "number of radial nodes"),
    Param("--Rmax", _POS, "truncation radius"),
    Param("--scheme", {"enum": ["uniform", "mapped-stretched"]}, "radial grid scheme"),
    Param("--k", {"type": "integer", "minimum": 0, "maximum": 2}, "Sobolev order on R^d"),
    Param("--lambda", {"type": "number", "exclusiveMinimum": 2}, "resolvent parameter λ > 2"),
    Param("--center", _POS, "centre of the bump right-hand side"),
    Param("--width", _POS, "half-width of the bump right-hand side"),
    Param("--count", {"type": "integer", "minimum": 2, "maximum": 50}, "number of eigenvalues"),
    Param("--T", _POS, "blowup-time parameter of the initial data"),
    Param("--T-lo", _POS, "lower end of the T bracket"),
    Param("--T-hi", _POS, "upper end of the T bracket"),
    Param("--eps", {"type": "number", "minimum": 0}, "perturbation amplitude"),
    Param("--tau-star", _POS, "final similarity time"),
    Param("--dt", _POS, "similarity time step"),
    Param("--integrator", {"enum": ["imex-cn-euler", "imex-cnab2", "explicit-rk"]}, "time integrator"),
    Param("--out", {"type": "string", "minLength": 1}, "output directory"),
    Param("--format", {"enum": ["csv", "json"]}, "table format"),
]}
# the positional argument of ``report``
RUNS_SCHEMA = {"type": "array", "items": {"type": "string"}, "minItems": 1}

_GRID = ("n", "N", "Rmax", "scheme")
_IO = ("out", "format")

#: subcommand -> (help, defaults of its parameters)
SUBCOMMANDS: Dict[str, tuple] = {
    "profiles": ("sample φ_n, U_{n-2}, ν and g", dict(n=5, N=3000, Rmax=30.0, scheme="uniform")),
    "transform": ("reduced mass of U against φ and the inverse transform",
                  dict(n=3, N=4000, Rmax=100.0, scheme="mapped-stretched")),
    "norms": ("Sobolev norm equivalence under the reduced mass", dict(n=3, N=3000, Rmax=30.0, scheme="uniform", k=1)),
    "ggmt": ("integral certificate for the SUSY partner potential", {}),
    "spectrum": ("top of the spectrum of L and the SUSY partner check", dict(N=2000, Rmax=30.0, count=6)),
    "semigroup": ("free semigroup composition and X^3 decay", dict(N=1500, Rmax=30.0)),
    "resolvent": ("resolvent ODE with a bump right-hand side",
                  dict(N=2000, Rmax=20.0, **{"lambda": 3.0}, center=1.5, width=0.5)),
    "evolve": ("similarity-variable flow from perturbed data",
               dict(N=1500, Rmax=30.0, T=1.0, eps=1e-3, tau_star=6.0, dt=0.01, integrator="imex-cnab2")),
    "shoot": ("bisection on the blowup time T",
              dict(N=1500, Rmax=30.0, T_lo=0.9, T_hi=1.1, eps=1e-3, tau_star=6.0, dt=0.01, integrator="imex-cnab2")),
    "physical": ("physical-time run to ‖w‖ = 1e8 on a stretched grid", dict(N=3000, Rmax=30.0, eps=0.0)),
    "report": ("convergence table from several run directories", {}),
}
for _name, (_h, _d) in SUBCOMMANDS.items():
    for _k in _IO:
        _d.setdefault(_k, "csv" if _k == "format" else None)


def subcommand_keys(name: str) -> List[str]:
    keys = list(SUBCOMMANDS[name][1])
    return keys + (["runs"] if name == "report" else [])


def _build_schema() -> dict:
    branches = []
    for name in SUBCOMMANDS:
        props = {"subcommand": {"const": name}}
        for key in subcommand_keys(name):
            if key == "runs":
                props[key] = RUNS_SCHEMA
            elif key == "out":
                props[key] = {"anyOf": [PARAMS[key].schema, {"type": "null"}]}
            else:
                props[key] = PARAMS[key].schema
        branches.append({"if": {"properties": {"subcommand": {"const": name}}},
                         "then": {"properties": props, "additionalProperties": False}})
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "RunConfig",
        "type": "object",
        "required": ["subcommand"],
        "properties": {"subcommand": {"enum": list(SUBCOMMANDS)}},
        "allOf": branches,
    }


SCHEMA = _build_schema()


def validate_config(config: dict) -> dict:
    """Validate against :data:`SCHEMA` plus cross-field rules; returns the config with defaults."""
    if not isinstance(config, dict) or config.get("subcommand") not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {config.get('subcommand') if isinstance(config, dict) else config!r}")
    name = config["subcommand"]
    full = {"subcommand": name, **SUBCOMMANDS[name][1], **{k: v for k, v in config.items() if v is not None}}
    if name == "report" and "runs" not in full:
        full["runs"] = []
    try:
        jsonschema.validate(full, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "config"
        raise ConfigError(f"{where}: {exc.message}") from None
    if name == "shoot" and not full["T_lo"] < full["T_hi"]:
        raise ConfigError("T_lo must be below T_hi")
    if name == "profiles" and full["n"] < 5:
        raise ConfigError("profiles need n >= 5 (U lives in d = n - 2 >= 3)")
    if name == "resolvent" and full["center"] + full["width"] >= full["Rmax"]:
        raise ConfigError("bump support must lie inside Rmax")
    return full


# --- artifacts ----------------------------------------------------------------------------

@dataclass
class Table:
    columns: List[str]
    rows: np.ndarray

    def write(self, path: Path, fmt: str) -> Path:
        if fmt == "csv":
            target = path.with_suffix(".csv")
            np.savetxt(target, np.atleast_2d(self.rows), fmt=CSV_FORMAT, delimiter=",",
                       header=",".join(self.columns), comments="")
        else:
            target = path.with_suffix(".json")
            target.write_text(json.dumps({"columns": self.columns, "rows": np.asarray(self.rows).tolist()}) + "\n")
        return target

    @classmethod
    def read(cls, path: Path) -> "Table":
        if path.suffix == ".csv":
            with open(path) as fh:
                cols = fh.readline().strip().split(",")
            rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            return cls(cols, rows)
        data = json.loads(path.read_text())
        return cls(data["columns"], np.array(data["rows"], dtype=float).reshape(-1, len(data["columns"])))


@dataclass
class RunArtifact:
    """Persisted record of one run."""

    config: dict
    summary: dict
    tables: Dict[str, Table] = field(default_factory=dict)
    version: str = __version__

    def write(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        fmt = self.config.get("format", "csv")
        files = [self.tables[name].write(directory / name, fmt).name for name in sorted(self.tables)]
        _dump(directory / "config.json", self.config)
        _dump(directory / "summary.json", {**self.summary, "version": self.version, "outputs": files})

    @classmethod
    def read(cls, directory: Path) -> "RunArtifact":
        directory = Path(directory)
        config = json.loads((directory / "config.json").read_text())
        summary = json.loads((directory / "summary.json").read_text())
        version = summary.pop("version", __version__)
        files = summary.pop("outputs", [])
        tables = {Path(f).stem: Table.read(directory / f) for f in files}
        return cls(config, summary, tables, version)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def default_out(config: dict) -> str:
    """Deterministic run directory name derived from the configuration."""
    key = json.dumps({k: v for k, v in config.items() if k != "out"}, sort_keys=True)
    return str(Path("runs") / f"{config['subcommand']}-{hashlib.sha256(key.encode()).hexdigest()[:12]}")


# --- subcommands --------------------------------------------------------------------------
# Each returns (results, tables, convergence) where convergence = (value, resolution, reference).

def _grid(c, n=None):
    from .grids import make_grid
    return make_grid(c.get("n", n) if n is None else n, c["Rmax"], c["N"], c.get("scheme", "uniform"))


def _run_profiles(c):
    from .grids import laplacian_at_origin
    from .profiles import norm_H, profile_U, profile_g, profile_nu, profile_phi
    g = _grid(c)
    n, r = c["n"], g.nodes
    phi = g.sample(lambda x: profile_phi(n, x))
    cols = [r, profile_phi(n, r), profile_U(n - 2, r)]
    names = ["r", "phi", "U"]
    res = {"phi_origin": 1.0 / (n - 4), "laplacian_phi_origin": laplacian_at_origin(phi),
           "laplacian_phi_origin_exact": -n / (n - 4) ** 2}
    if n == 5:
        nu = g.sample(profile_nu)
        res["nu_norm_H"] = float(norm_H(nu))
        cols += [nu.values, profile_g(g).values]
        names += ["nu", "g"]
    conv = (res["laplacian_phi_origin"], c["N"], res["laplacian_phi_origin_exact"])
    return res, {"profiles": Table(names, np.column_stack(cols))}, conv


def _run_transform(c):
    from .families import NORM_SUITE
    from .profiles import inverse_reduced_mass, profile_U, profile_phi, reduced_mass
    g = _grid(c)
    d, r = c["n"], g.nodes
    u = g.sample(lambda x: profile_U(d, x))
    w = reduced_mass(u).values
    phi = profile_phi(d + 2, r)
    rel = np.abs(w - phi) / np.abs(phi)
    s = g.sample(NORM_SUITE["gauss"])
    back = inverse_reduced_mass(reduced_mass(s)).values
    res = {"max_rel_error_phi": float(np.max(rel)), "roundtrip_error": float(np.max(np.abs(back - s.values)))}
    table = Table(["r", "U", "w", "phi", "rel_error"], np.column_stack((r, u.values, w, phi, rel)))
    return res, {"transform": table}, (res["max_rel_error_phi"], c["N"], 0.0)


def _run_norms(c):
    from .families import NORM_SUITE
    from .profiles import equivalence_constant, norm_equivalence_check
    g = _grid(c)
    k = c["k"]
    rows, ratios = [], []
    for i, f in enumerate(NORM_SUITE.values()):
        ne = norm_equivalence_check(g.sample(f), k)
        rows.append((i, ne.lhs, ne.rhs, ne.ratio))
        ratios.append(ne.ratio)
    ratios = np.array(ratios)
    const = equivalence_constant(c["n"])
    spread = float((ratios.max() - ratios.min()) / ratios.mean())
    res = {"k": k, "functions": list(NORM_SUITE), "ratios": ratios, "constant": const,
           "relative_spread": spread, "max_deviation_from_constant": float(np.max(np.abs(ratios / const - 1))),
           "pass": spread < 1e-2}
    return res, {"norms": Table(["function", "lhs", "rhs", "ratio"], np.array(rows))}, (float(ratios.mean()), c["N"], const)


def _run_ggmt(c):
    from .spectral import ggmt_certificate, potential_QS
    cert = ggmt_certificate()
    r = np.linspace(0.0, 5.0, 501)[1:]
    q = potential_QS(r)
    table = Table(["r", "Q_S", "integrand"], np.column_stack((r, q, r**3 * q * q)))
    return cert.as_dict(), {"potential": table}, (cert.lhs, None, None)


def _run_spectrum(c):
    from .spectral import assemble, eigen_solve, spectrum_L, susy_check
    spec = spectrum_L(c["count"], c["N"], c["Rmax"], order_check=True)
    A = eigen_solve(assemble("q_full", c["N"], c["Rmax"]), c["count"])
    AS = eigen_solve(assemble("partner_QS", c["N"], c["Rmax"]), c["count"])
    rep = susy_check(A, AS, pairs=min(5, c["count"] - 1))
    res = spec.as_dict()
    res["others_negative"] = bool(np.all(spec.eigenvalues[1:] < 0))
    res["susy"] = {"ground": rep.ground, "ground_present": rep.ground_present,
                   "ground_absent_in_partner": rep.ground_absent_in_partner,
                   "pairs": [list(p) for p in rep.pairs], "superpotential_residual": rep.superpotential_residual,
                   "pass": rep.passed}
    idx = np.arange(spec.eigenvalues.size)
    cols = [idx, spec.eigenvalues, spec.richardson, spec.order]
    table = Table(["index", "eigenvalue", "richardson", "order"], np.column_stack(cols))
    return res, {"eigenvalues": table}, (spec.top, c["N"], 1.0)


def _run_semigroup(c):
    from .families import SEMIGROUP_SUITE
    from .profiles import norm_Xk
    from .spectral import apply_S0
    g = _grid({**c, "n": 5})
    taus = (0.5, 1.0, 2.0)
    rows = []
    worst = -math.inf
    comp = 0.0
    for i, f in enumerate(SEMIGROUP_SUITE.values()):
        s = g.sample(f)
        base = float(norm_Xk(s, 3))
        for tau in taus:
            ratio = float(norm_Xk(apply_S0(s, tau), 3)) / base
            bound = math.exp(-tau / 4.0)
            worst = max(worst, ratio - bound)
            rows.append((i, tau, ratio, bound))
        if i < 3:
            a = apply_S0(apply_S0(s, 0.5), 1.0)
            b = apply_S0(s, 1.5)
            comp = max(comp, float(np.max(np.abs(a.values - b.values)) / np.max(np.abs(s.values))))
    res = {"functions": list(SEMIGROUP_SUITE), "taus": list(taus), "composition_error": comp,
           "max_excess_over_bound": worst, "pass": comp < 1e-6 and worst <= 1e-10}
    return res, {"decay": Table(["function", "tau", "x3_ratio", "bound"], np.array(rows))}, (comp, c["N"], 0.0)


def _run_resolvent(c):
    from .grids import make_grid
    from .resolvent import (ResolventProblem, decay_exponent, matrix_agreement, ode_residual,
                            plugback_residual, resolvent_solution, v_pm_wronskian)
    g = make_grid(5, c["Rmax"], c["N"])
    pb = ResolventProblem.with_bump(c["lambda"], c["center"], c["width"], grid=g)
    sol = resolvent_solution(pb)
    u, du = sol(g.nodes)
    field_u = g.field(u)
    radii = (1.0, 3.0, 6.0)
    wr = [float(v_pm_wronskian(x, pb.mu)) for x in radii]
    fld = pb.f(g.nodes)
    pointwise = (_residual_vector(pb, g, u, du)) / np.max(np.abs(fld))
    res = {
        "lambda": pb.lam, "mu": pb.mu, "wronskian_v_pm": dict(zip(map(str, radii), wr)),
        "scaled_wronskian": sol.pair.wronskian, "relative_wronskian": sol.pair.relative_wronskian,
        "ode_residual": ode_residual(pb, u, du), "plugback_residual": plugback_residual(sol),
        "decay_exponent": decay_exponent(field_u), "decay_exponent_expected": -2.0 - 2.0 * pb.lam,
        "matrix_agreement": matrix_agreement(pb),
    }
    table = Table(["rho", "u", "residual"], np.column_stack((g.nodes, u, pointwise)))
    return res, {"resolvent": table}, (res["plugback_residual"], c["N"], 0.0)


def _residual_vector(pb, g, u, du):
    from .resolvent import _odd_derivative
    p, q = pb.coefficients(g.nodes)
    return _odd_derivative(g, du, 8) + p * du + q * u + pb.f(g.nodes)


def _trajectory_table(traj) -> Table:
    return Table(["tau", "norm_H", "a", "norm_X3"], traj.rows())


def _evolution_config(c, **kw):
    from .evolution import EvolutionConfig
    return EvolutionConfig(dt=c["dt"], tau_star=c["tau_star"], scheme=c["integrator"], eps=c["eps"], **kw)


def _run_evolve(c):
    from .evolution import default_similarity_grid, evolve, fit_decay, initial_data, perturbation
    g = default_similarity_grid(c["N"], c["Rmax"])
    cfg = _evolution_config(c, T=c["T"])
    traj = evolve(initial_data(perturbation(g, c["eps"]), c["T"]), cfg)
    res = {"status": traj.status, "steps": traj.steps, "final_norm_H": float(traj.norm_H[-1]),
           "final_a": float(traj.a[-1]), "stability_bound": traj.stability_bound}
    if traj.status == "ok" and traj.norm_H[-1] > 0:
        res["decay_fit"] = fit_decay(traj).as_dict()
    return res, {"trajectory": _trajectory_table(traj)}, (res["final_norm_H"], c["N"], None)


def _run_shoot(c):
    from .evolution import (default_similarity_grid, evolve, fit_decay, fit_growth, initial_data,
                            perturbation, shoot_T)
    from .spectral import spectrum_L
    g = default_similarity_grid(c["N"], c["Rmax"])
    v = perturbation(g, c["eps"])
    cfg = _evolution_config(c)
    sh = shoot_T(v, (c["T_lo"], c["T_hi"]), c["tau_star"], cfg)
    traj = sh.trajectory
    window = (min(2.0, 0.5 * c["tau_star"]), c["tau_star"])
    fit = fit_decay(traj, window)
    gap = spectrum_L(3, 2000, 30.0, order_check=False).gap
    growth = {}
    tables = {"trajectory": _trajectory_table(traj)}
    for label, dT in (("minus", -1e-2), ("plus", 1e-2)):
        off = evolve(initial_data(v, sh.T_star + dT), _evolution_config(c, T=sh.T_star + dT, escape=1.0))
        hi = min(2.0, off.taus[-1])
        growth[label] = fit_growth(off, (0.0, hi))
        tables[f"off_{label}"] = _trajectory_table(off)
    res = {**sh.as_dict(), "omega_meas": fit.omega, "fit_window": list(window), "fit_residual": fit.residual,
           "spectral_gap": gap, "gap_relative_difference": abs(fit.omega - gap) / gap,
           "growth_rates": growth, "T_star_minus_one": sh.T_star - 1.0}
    return res, tables, (sh.T_star, c["N"], None)


def _run_physical(c):
    from .evolution import PhysicalConfig, evolve_physical, perturbation, physical_grid
    from .profiles import profile_phi
    pc = PhysicalConfig(N=c["N"], R_max=c["Rmax"])
    g = physical_grid(pc)
    w0 = g.sample(lambda r: profile_phi(5, r)) + perturbation(g, c["eps"])
    out = evolve_physical(w0, pc)
    tables = {"origin": Table(["t", "w_origin"], np.column_stack((out.times, out.w_origin)))}
    xi = out.snapshots[0][2]
    tables["snapshots"] = Table(["xi", "phi"] + [f"level_{i}" for i in range(len(out.snapshots))],
                                np.column_stack([xi, profile_phi(5, xi)] + [s[3] for s in out.snapshots]))
    return out.as_dict(), tables, (out.T_blowup, c["N"], None)


RUNNERS: Dict[str, Callable] = {
    "profiles": _run_profiles, "transform": _run_transform, "norms": _run_norms, "ggmt": _run_ggmt,
    "spectrum": _run_spectrum, "semigroup": _run_semigroup, "resolvent": _run_resolvent,
    "evolve": _run_evolve, "shoot": _run_shoot, "physical": _run_physical,
}


def _preflight(c: dict) -> None:
    """Checks that need library objects; failures count as invalid configuration."""
    from .grids import GridError
    try:
        if c["subcommand"] in ("profiles", "transform", "norms"):
            _grid(c)
    except GridError as exc:
        raise ConfigError(str(exc)) from None


# --- report -------------------------------------------------------------------------------

def convergence_table(summaries: Sequence[dict]) -> Table:
    """Rows (resolution, value, error, observed order), sorted by resolution.

    With a reference value the order compares consecutive errors; without one
    it uses differences of three consecutive values.
    """
    if not summaries:
        raise ReportError("no run directories given")
    names = {s.get("subcommand") for s in summaries}
    if len(names) != 1:
        raise ReportError(f"cannot mix subcommands {sorted(map(str, names))}")
    rows = []
    for s in summaries:
        conv = s.get("convergence") or {}
        if s.get("error") is not None:
            raise ReportError(f"run failed: {s['error']}")
        if conv.get("resolution") is None:
            raise ReportError(f"{s['subcommand']} has no resolution parameter")
        rows.append((float(conv["resolution"]), float(conv["value"]), conv.get("reference")))
    rows.sort(key=lambda t: t[0])
    refs = {r[2] for r in rows}
    ref = refs.pop() if len(refs) == 1 else None
    res = np.array([r[0] for r in rows])
    val = np.array([r[1] for r in rows])
    err = np.abs(val - ref) if ref is not None else np.full(val.size, math.nan)
    order = np.full(val.size, math.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        if ref is not None:
            order[1:] = np.log(err[:-1] / err[1:]) / np.log(res[1:] / res[:-1])
        else:
            dv = np.abs(np.diff(val))
            order[2:] = np.log(dv[:-1] / dv[1:]) / np.log(res[2:] / res[1:-1])
    return Table(["resolution", "value", "error", "observed_order"], np.column_stack((res, val, err, order)))


def _report(c: dict) -> tuple:
    summaries = []
    for d in c["runs"]:
        path = Path(d) / "summary.json"
        if not path.is_file():
            raise ReportError(f"{d}: not a run directory")
        summaries.append(json.loads(path.read_text()))
    table = convergence_table(summaries)
    res = {"subcommand_reported": summaries[0]["subcommand"], "runs": list(c["runs"]),
           "observed_order": table.rows[-1, 3]}
    return res, {"convergence": table}


# --- entry point --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ksblowup", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser, metavar="SUBCOMMAND")
    for name, (help_text, defaults) in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        if name == "report":
            sp.add_argument("runs", nargs="*", help="run directories")
        for key in defaults:
            p = PARAMS[key]
            kind = p.schema.get("type")
            typ = {"integer": int, "number": float}.get(kind, str)
            shown = "auto" if defaults[key] is None else defaults[key]
            sp.add_argument(p.flag, dest=key, type=typ, default=None,
                            choices=p.schema.get("enum"), help=f"{p.help} (default: {shown})")
    return parser


def parse_config(argv: Sequence[str]) -> dict:
    ns = build_parser().parse_args(list(argv))
    if ns.subcommand is None:
        raise ConfigError("a subcommand is required")
    return validate_config(vars(ns))


def execute(config: dict) -> tuple:
    """Run a validated configuration; returns (exit code, output directory)."""
    c = dict(config)
    _preflight(c)
    c["out"] = c["out"] or default_out(c)
    out = Path(c["out"])
    start = time.perf_counter()
    summary = {"subcommand": c["subcommand"], "error": None}
    tables = {}
    code = EXIT_OK
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if c["subcommand"] == "report":
                results, tables = _report(c)
            else:
                results, tables, (value, resolution, ref) = RUNNERS[c["subcommand"]](c)
                summary["convergence"] = {"value": value, "resolution": resolution, "reference": ref}
        summary["results"] = results
        summary["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    except ReportError as exc:
        raise ConfigError(str(exc)) from None
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = EXIT_NUMERICAL
    summary["wall_seconds"] = time.perf_counter() - start
    RunArtifact(c, summary, tables).write(out)
    return code, out


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
        code, out = execute(config)
    except ConfigError as exc:
        print(f"ksblowup: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    summary = json.loads((out / "summary.json").read_text())
    if code == EXIT_OK:
        print(json.dumps({"out": str(out), "results": summary.get("results")}, indent=2))
    else:
        print(f"ksblowup: numerical failure: {summary['error']['message']}", file=sys.stderr)
    return code


__all__ = [
    "ConfigError", "EXIT_INVALID", "EXIT_NUMERICAL", "EXIT_OK", "PARAMS", "RunArtifact", "SCHEMA",
    "SUBCOMMANDS", "Table", "build_parser", "convergence_table", "default_out", "execute", "main",
    "parse_config", "validate_config",
]
