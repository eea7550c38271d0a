"""Scenario configuration files and the drivers behind the command line.

A scenario is a JSON document naming a geometry, one soil per subdomain,
initial and boundary data, solver and coupling settings, and the outputs to
write. Physical values are taken as given; the ``units`` strings are copied
to the run record untouched. See ``README.md`` for the field reference.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import constitutive as cm
from . import mesh as msh
from . import output as out
from . import verification as vf
from .assembly import LinearSolveError, l2_norm_error
from .dd import DD_COLUMNS, CoupledProblem, CouplingConfig, SchwarzError, run_coupled
from .schemes import (
    LINEAR_U,
    SCHEMES,
    STEP_COLUMNS,
    BoundaryData,
    CoefficientError,
    ConfigError,
    Problem,
    SolverConfig,
    StepError,
    project_initial,
    run_transient,
)

log = logging.getLogger(__name__)

FIXTURES = ("fibrous1d", "sat_unsat_1d", "mms", "box2d", "layered2d", "layered_sat_dry2d", "inclusion2d")
THREADS_ENV = "URICHARDS_THREADS"
SOLVER_FAILURES = (StepError, SchwarzError, LinearSolveError, CoefficientError, cm.SaturationDomainError, FloatingPointError)


class ScenarioError(ValueError):
    """Invalid scenario file; the message names the offending field."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_value = {"anyOf": [{"type": "number"}, {"type": "string", "pattern": r"^\$[A-Za-z_]\w*$"}]}
_units = {"type": "object", "additionalProperties": {"type": "string"}}
_extent = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_MODEL = {
    "type": "object",
    "required": ["theta_s", "theta_r", "K_s"],
    "properties": {
        "name": {"type": "string"},
        "family": {"enum": list(cm.FAMILIES)},
        "kr": {"enum": [cm.NATIVE, cm.POWER_LAW]},
        "theta_s": _num,
        "theta_r": _num,
        "K_s": _pos,
        "alpha": _pos,
        "h_cap": _pos,
        "n": _num,
        "B": _pos,
        "beta": _num,
        "gamma": _pos,
        "A": _pos,
        "lambda_bc": _pos,
        "rho": _pos,
        "g": _pos,
        "gravity_scale": _num,
        "units": _units,
    },
    "additionalProperties": False,
}

_STATE = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {"S": _value, "theta": _value, "psi": _value, "u": _value},
    "additionalProperties": False,
}

_INITIAL = {
    "type": "object",
    "required": ["type"],
    "oneOf": [
        {
            "properties": {"type": {"const": "constant"}, "S": _value, "theta": _value, "psi": _value, "u": _value},
            "minProperties": 2,
            "maxProperties": 2,
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "threshold"},
                "z": _num,
                "below": _STATE,
                "above": _STATE,
            },
            "required": ["z", "below", "above"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "psi_linear"},
                "psi0": _num,
                "gradient": {"type": "array", "items": _num, "minItems": 1, "maxItems": 2},
            },
            "required": ["psi0", "gradient"],
            "additionalProperties": False,
        },
        {"properties": {"type": {"const": "mms"}}, "additionalProperties": False},
    ],
}

_BC = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["dirichlet", "neumann", "free_drainage"]},
        "S": _value,
        "theta": _value,
        "psi": _value,
        "u": _value,
        "q": _value,
        "units": _units,
    },
    "additionalProperties": False,
}
_BCS = {"type": "object", "additionalProperties": _BC}

_GEOMETRY = {
    "type": "object",
    "required": ["type"],
    "oneOf": [
        {
            "properties": {"type": {"const": "interval"}, "n": {"type": "integer", "minimum": 1}, "extent": _extent},
            "required": ["n", "extent"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "rectangle"},
                "nx": {"type": "integer", "minimum": 1},
                "ny": {"type": "integer", "minimum": 1},
                "extent": {"type": "array", "items": _extent, "minItems": 2, "maxItems": 2},
                "pattern": {"enum": ["crossed", "diagonal"]},
                "tag_rules": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["tag", "side", "range"],
                        "properties": {
                            "tag": {"type": "string"},
                            "side": {"enum": ["bottom", "top", "left", "right"]},
                            "range": _extent,
                        },
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["nx", "ny", "extent"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "layered"},
                "nx": {"type": "integer", "minimum": 1},
                "ny": {"type": "integer", "minimum": 1},
                "ny_bottom": {"type": "integer", "minimum": 1},
                "extent": {"type": "array", "items": _extent, "minItems": 2, "maxItems": 2},
                "interface": {"const": "manzini"},
                "pattern": {"enum": ["crossed", "diagonal"]},
            },
            "required": ["nx", "ny", "extent"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "msh"},
                "path": {"type": "string"},
                "regions": {"type": "array", "items": {"type": "string"}, "minItems": 1, "maxItems": 2},
            },
            "required": ["path"],
            "additionalProperties": False,
        },
    ],
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "urichards scenario",
    "type": "object",
    "required": ["name", "units", "geometry", "models", "initial", "boundary", "solver"],
    "properties": {
        "name": {"type": "string", "pattern": r"^[A-Za-z0-9_\-]+$"},
        "description": {"type": "string"},
        "kind": {"enum": ["transient", "mms"]},
        "units": _units,
        "geometry": _GEOMETRY,
        "models": {"type": "array", "items": _MODEL, "minItems": 1, "maxItems": 2},
        "initial": {"anyOf": [_INITIAL, {"type": "array", "items": _INITIAL, "minItems": 2, "maxItems": 2}]},
        "boundary": {"anyOf": [_BCS, {"type": "array", "items": _BCS, "minItems": 2, "maxItems": 2}]},
        "gravity": {"type": "boolean"},
        "solver": {
            "type": "object",
            "required": ["dt", "t_end"],
            "properties": {
                "dt": _pos,
                "t_end": _pos,
                "scheme": {"enum": list(SCHEMES)},
                "newton_abs_tol": _pos,
                "newton_rel_tol": _pos,
                "newton_max_iter": {"type": "integer", "minimum": 1},
                "delta": _pos,
                "lumped": {"type": "boolean"},
                "coefficient_rule": {"enum": ["nodal", "gauss"]},
            },
            "additionalProperties": False,
        },
        "coupling": {
            "type": "object",
            "properties": {
                "lambda": _pos,
                "dd_tol": _pos,
                "dd_max_iter": {"type": "integer", "minimum": 1},
                "flux_recovery": {"const": "variational_residual"},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "times": {"type": "array", "items": _num},
                "fields": {"type": "array", "items": {"enum": list(out.FIELDS)}, "uniqueItems": True},
                "formats": {"type": "array", "items": {"enum": ["csv", "vtk"]}, "uniqueItems": True},
                "cut_x": _num,
                "cut_points": {"type": "integer", "minimum": 2},
                "compare_scheme": {"enum": list(SCHEMES)},
            },
            "additionalProperties": False,
        },
        "verification": {
            "type": "object",
            "properties": {
                "space": {
                    "type": "object",
                    "required": ["levels", "dt"],
                    "properties": {"levels": {"type": "array", "items": {"type": "integer", "minimum": 1}}, "dt": _pos},
                    "additionalProperties": False,
                },
                "time": {
                    "type": "object",
                    "required": ["levels", "n"],
                    "properties": {"levels": {"type": "array", "items": _pos}, "n": {"type": "integer", "minimum": 1}},
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "required": ["name", "values"],
            "properties": {"name": {"type": "string", "pattern": r"^[A-Za-z_]\w*$"}, "values": {"type": "array", "items": _num, "minItems": 1}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_VALIDATOR = jsonschema.Draft7Validator(SCHEMA)


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(data):
    """Raise :class:`ScenarioError` listing every schema violation with its field path."""
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            # oneOf failures are more useful through their best sub-error
            best = jsonschema.exceptions.best_match([e]) if e.context else e
            lines.append(f"{_path(best)}: {best.message}")
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(lines))


@dataclass
class Scenario:
    """Validated scenario; ``data`` holds the raw mapping with defaults filled in."""

    name: str
    data: dict
    models: list
    solver: SolverConfig
    coupling: Optional[CouplingConfig] = None
    base_dir: Path = field(default_factory=Path.cwd)
    label: str = ""

    @property
    def kind(self):
        return self.data.get("kind", "transient")

    @property
    def two_region(self):
        return len(self.models) == 2

    @property
    def output(self):
        return self.data.get("output", {})

    @property
    def units(self):
        return self.data["units"]


def _substitute(node, name, value):
    if isinstance(node, dict):
        return {k: _substitute(v, name, value) for k, v in node.items()}
    if isinstance(node, list):
        return [_substitute(v, name, value) for v in node]
    if node == f"${name}":
        return value
    return node


def _leftover_refs(node, where=""):
    if isinstance(node, dict):
        for k, v in node.items():
            yield from _leftover_refs(v, f"{where}/{k}" if where else k)
    elif isinstance(node, list):
        for i, v in enumerate(node):
            yield from _leftover_refs(v, f"{where}/{i}")
    elif isinstance(node, str) and node.startswith("$"):
        yield where, node


def _is_two_region_geometry(geom):
    if geom["type"] == "layered":
        return True
    if geom["type"] == "msh":
        return len(geom.get("regions", [])) == 2
    return False


def build(data, base_dir=".", label=""):
    """Turn one validated mapping (no sweep placeholders left) into a :class:`Scenario`."""
    for where, ref in _leftover_refs({k: v for k, v in data.items() if k != "sweep"}):
        raise ScenarioError(f"{where}: unresolved placeholder {ref!r} (no matching sweep)")
    geom = data["geometry"]
    n_models = len(data["models"])
    two = _is_two_region_geometry(geom)
    if two != (n_models == 2):
        raise ScenarioError(f"models: a {'two' if two else 'single'}-region geometry needs {2 if two else 1} model(s), got {n_models}")
    for key in ("initial", "boundary"):
        if isinstance(data[key], list) and not two:
            raise ScenarioError(f"{key}: per-subdomain list given for a single-region geometry")
    if two and not isinstance(data["boundary"], list):
        raise ScenarioError("boundary: two-region scenarios need one mapping per subdomain")
    if data.get("kind") == "mms" and geom["type"] != "interval":
        raise ScenarioError("geometry: manufactured-solution scenarios run on an interval")
    models = []
    for i, md in enumerate(data["models"]):
        try:
            models.append(cm.HydraulicModel.from_dict(md))
        except cm.ParameterError as exc:
            raise ScenarioError(f"models/{i}: {exc}") from exc
        ok, why = cm.check_boundedness(models[-1])
        if not ok:
            raise ScenarioError(f"models/{i}: {why}")
    try:
        solver = SolverConfig(**data["solver"])
    except (ConfigError, TypeError) as exc:
        raise ScenarioError(f"solver: {exc}") from exc
    for t in data.get("output", {}).get("times", []):
        if t < 0.0 or t > solver.t_end * (1 + 1e-12):
            raise ScenarioError(f"output/times: {t} outside [0, t_end={solver.t_end}]")
    coupling = None
    if two:
        c = dict(data.get("coupling", {}))
        coupling = CouplingConfig(
            lam=c.get("lambda", 25.0), dd_tol=c.get("dd_tol", 1e-3), dd_max_iter=c.get("dd_max_iter", 10),
            flux_recovery=c.get("flux_recovery", "variational_residual"),
        )
    return Scenario(data["name"], data, models, solver, coupling, Path(base_dir), label)


def load_config(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc


def parse_scenario(path):
    """Read, validate and expand a scenario file.

    Returns a list of :class:`Scenario`, one per ``sweep`` value (a single
    element without a sweep). ``$name`` strings anywhere are replaced by the
    swept value.
    """
    path = Path(path)
    data = load_config(path)
    validate(data)
    sweep = data.get("sweep")
    if not sweep:
        return [build(data, path.parent)]
    runs = []
    for v in sweep["values"]:
        sub = _substitute({k: d for k, d in data.items() if k != "sweep"}, sweep["name"], v)
        validate(sub)
        runs.append(build(sub, path.parent, label=f"{sweep['name']}_{v:.0e}"))
    return runs


def fixture_path(name):
    return Path(str(resources.files("urichards") / "fixtures" / f"{name}.json"))


def list_scenarios():
    """Names of the shipped scenario fixtures."""
    return list(FIXTURES)


def resolve_config(name_or_path):
    """A path as given, or the shipped fixture of that name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    if name_or_path in FIXTURES:
        return fixture_path(name_or_path)
    raise ScenarioError(f"no such config file or fixture: {name_or_path}")


# geometry and initial data -------------------------------------------------

def build_geometry(scn, mesh_n=None):
    """Mesh (or :class:`InterfacePair`) of the scenario; ``mesh_n`` overrides the resolution."""
    g = scn.data["geometry"]
    kind = g["type"]
    if kind == "interval":
        a, b = g["extent"]
        return msh.interval_mesh(mesh_n or g["n"], a, b)
    if kind == "rectangle":
        nx, ny = (mesh_n, mesh_n) if mesh_n else (g["nx"], g["ny"])
        rules = [(r["tag"], r["side"], tuple(r["range"])) for r in g.get("tag_rules", [])]
        return msh.rectangle_mesh(nx, ny, tuple(map(tuple, g["extent"])), rules, g.get("pattern", "crossed"))
    if kind == "layered":
        if mesh_n:
            nx, ny, nyb = mesh_n, max(1, mesh_n // 2), max(1, mesh_n // 2)
        else:
            nx, ny, nyb = g["nx"], g["ny"], g.get("ny_bottom", g["ny"])
        return msh.layered_split(nx, ny, tuple(map(tuple, g["extent"])), msh.manzini_interface, g.get("pattern", "crossed"), nyb)
    if mesh_n:
        raise ScenarioError("--mesh-n does not apply to a mesh file")
    path = Path(g["path"])
    if not path.is_absolute():
        path = scn.base_dir / path
    try:
        m = msh.read_msh(path)
    except OSError as exc:
        raise ScenarioError(f"geometry/path: cannot read {path}: {exc}") from exc
    regions = g.get("regions")
    if regions and len(regions) == 2:
        return msh.split_regions(m, regions[0], regions[1])
    return m


def _state_kw(spec):
    (var, val), = ((k, v) for k, v in spec.items() if k != "type")
    return {f"{var}0": float(val)}


def initial_u(spec, mesh, model):
    """Nodal ``u`` from one initial-condition block."""
    kind = spec["type"]
    if kind == "constant":
        return project_initial(mesh, model, **_state_kw(spec))
    if kind == "threshold":
        z = mesh.nodes[:, -1]
        below = z <= spec["z"] + 1e-12
        lo = project_initial(mesh, model, **_state_kw(spec["below"]))
        hi = project_initial(mesh, model, **_state_kw(spec["above"]))
        return np.where(below, lo, hi)
    if kind == "psi_linear":
        grad = np.asarray(spec["gradient"], dtype=float)
        if grad.size != mesh.dim:
            raise ScenarioError(f"initial/gradient: expected {mesh.dim} components")
        return project_initial(mesh, model, psi0=lambda X: spec["psi0"] + X @ grad)
    raise ScenarioError(f"initial: {kind!r} is only valid for manufactured-solution scenarios")


def _initial_specs(scn):
    init = scn.data["initial"]
    if isinstance(init, list):
        return init
    return [init] * len(scn.models)


def _bc_specs(scn):
    bnd = scn.data["boundary"]
    return bnd if isinstance(bnd, list) else [bnd]


def _boundaries(scn):
    try:
        return [BoundaryData.from_dict(b) for b in _bc_specs(scn)]
    except (ConfigError, TypeError, ValueError) as exc:
        raise ScenarioError(f"boundary: {exc}") from exc


# running ---------------------------------------------------------------------

@dataclass
class RunResult:
    status: int
    outdir: Path
    summary: dict


def _apply_overrides(scn, scheme=None, dt=None):
    changes = {}
    if scheme:
        changes["scheme"] = scheme
    if dt:
        changes["dt"] = dt
    if not changes:
        return scn
    try:
        solver = replace(scn.solver, **changes)
    except ConfigError as exc:
        raise ScenarioError(f"override: {exc}") from exc
    return replace(scn, solver=solver)


def _write_record(outdir, scn, summary, mesh_info):
    record = {
        "name": scn.name,
        "label": scn.label,
        "units": scn.units,
        "solver": {k: v for k, v in vars(scn.solver).items()},
        "coupling": None if scn.coupling is None else vars(scn.coupling),
        "models": [m.to_dict() for m in scn.models],
        "mesh": mesh_info,
        "summary": summary,
    }
    with open(outdir / "run.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _mesh_info(geom):
    if isinstance(geom, msh.InterfacePair):
        return {
            "subdomains": [
                {"nodes": geom.mesh_1.num_nodes, "elements": geom.mesh_1.num_elements},
                {"nodes": geom.mesh_2.num_nodes, "elements": geom.mesh_2.num_elements},
            ],
            "interface_nodes": int(len(geom.gamma_nodes_1)),
        }
    return {"nodes": geom.num_nodes, "elements": geom.num_elements, "dim": geom.dim}


def _fields(scn):
    return tuple(scn.output.get("fields", ["u", "S", "theta", "psi"]))


def _formats(scn, dim):
    return tuple(scn.output.get("formats", ["csv"] if dim == 1 else ["vtk", "csv"]))


def _write_profiles(path, mesh, model, times, states, names):
    header = ["time", "z"] + list(names)
    rows = []
    order = np.argsort(mesh.nodes[:, 0], kind="stable")
    for t, st in zip(times, states):
        fd = out.nodal_fields(model, st.u, names)
        for i in order:
            rows.append([float(t), float(mesh.nodes[i, 0])] + [float(fd[k][i]) for k in names])
    out.write_csv(path, header, rows)


def _cut_rows(scn, meshes, models, states, t):
    names = _fields(scn)
    fds = []
    for m, model, st in zip(meshes, models, states):
        fd = out.nodal_fields(model, st.u, names)
        if "psi" in fd:
            fd["neg_log_psi"] = out.log_head(fd["psi"])
        fds.append(fd)
    ext = np.concatenate([m.nodes[:, 1] for m in meshes])
    header, rows = out.vertical_cut(meshes, fds, scn.output["cut_x"], scn.output.get("cut_points", 201), (ext.min(), ext.max()))
    return ["time"] + header, [[float(t)] + list(r) for r in rows]


def _write_2d(scn, outdir, geom, models, times, states):
    names = _fields(scn)
    fmts = _formats(scn, 2)
    pair = isinstance(geom, msh.InterfacePair)
    meshes = [geom.mesh_1, geom.mesh_2] if pair else [geom]
    cut_header, cut_rows = None, []
    for k, (t, st) in enumerate(zip(times, states)):
        sts = list(st) if pair else [st]
        if "vtk" in fmts:
            fds = [out.nodal_fields(m, s.u, names) for m, s in zip(models, sts)]
            out.write_mesh_vtk(outdir / f"{scn.name}_{k:04d}.vtk", geom, fds if pair else fds[0], f"{scn.name} t={t:.6g}")
        if "csv" in fmts and "cut_x" in scn.output:
            cut_header, rows = _cut_rows(scn, meshes, models, sts, t)
            cut_rows += rows
    if cut_header:
        out.write_csv(outdir / f"cut_x{scn.output['cut_x']:g}.csv", cut_header, cut_rows)


def _run_single(scn, geom, outdir, quiet):
    model = scn.models[0]
    bcs = _boundaries(scn)[0]
    gravity = scn.data.get("gravity", True)
    prob = Problem(geom, model, bcs, scn.solver, gravity=gravity)
    u0 = initial_u(_initial_specs(scn)[0], geom, model)
    times = scn.output.get("times")
    rows = []
    summary = {"status": "ok", "scheme": scn.solver.scheme}

    def on_step(state, info):
        rows.append((state.t, info.iterations, float(state.S.min()), float(state.S.max()), info.mass_balance))
        if not quiet and len(rows) % max(1, scn.solver.n_steps // 10) == 0:
            log.info("%s: t=%.6g (%d/%d)", scn.name, state.t, len(rows), scn.solver.n_steps)

    traj = None
    try:
        traj = _march(prob, scn.solver.scheme, u0, times, on_step)
    except SOLVER_FAILURES as exc:
        summary.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        log.error("%s failed: %s", scn.name, exc)
    out.write_csv(outdir / "steps.csv", STEP_COLUMNS, [(float(a), b, float(c), float(d), float(e)) for a, b, c, d, e in rows])
    summary["steps"] = len(rows)
    if rows:
        summary["mean_iterations"] = float(np.mean([r[1] for r in rows]))
        summary["min_S"] = float(min(r[2] for r in rows))
        summary["max_S"] = float(max(r[3] for r in rows))
        summary["max_abs_mass_balance"] = float(max(abs(r[4]) for r in rows))
    if traj is None:
        return 1, summary
    if geom.dim == 1:
        if "csv" in _formats(scn, 1):
            _write_profiles(outdir / "profiles.csv", geom, model, traj.times, traj.states, _fields(scn))
        if "vtk" in _formats(scn, 1):
            for k, (t, st) in enumerate(zip(traj.times, traj.states)):
                out.write_mesh_vtk(outdir / f"{scn.name}_{k:04d}.vtk", geom, out.nodal_fields(model, st.u, _fields(scn)))
    else:
        _write_2d(scn, outdir, geom, [model], traj.times, traj.states)
    other = scn.output.get("compare_scheme")
    if other and other != scn.solver.scheme:
        cmp_min = [np.inf]

        def track(state, info):
            cmp_min[0] = min(cmp_min[0], float(state.S.min()))

        try:
            cmp_prob = Problem(geom, model, bcs, replace(scn.solver, scheme=other), gravity=gravity)
            cmp_traj = _march(cmp_prob, other, u0, times, track)
        except SOLVER_FAILURES as exc:
            summary.update(status="failed", error=f"comparison run ({other}): {exc}")
            return 1, summary
        crow = []
        for t, a, b in zip(traj.times, traj.states, cmp_traj.states):
            d = np.abs(a.S - b.S)
            crow.append((float(t), float(d.max()), float(l2_norm_error(geom, a.S - b.S, lambda X: 0.0))))
        out.write_csv(outdir / "scheme_comparison.csv", ("time", "max_abs_dS", "l2_dS"), crow)
        summary["compare_scheme"] = other
        summary["compare_min_S"] = cmp_min[0]
        summary["max_abs_dS_final"] = crow[-1][1]
    return 0, summary


def _march(prob, scheme, u0, times, on_step=None):
    if scheme in (LINEAR_U, "newton_u"):
        state = prob.initial_state(u0)
    else:
        from . import transform as tr

        state = prob.initial_state_S(tr.S_from_u(prob.model, np.clip(u0, 0.0, tr.u_max(prob.model))))
    return run_transient(prob, state, times, on_step)


def _run_coupled(scn, pair, outdir, quiet):
    bcs = _boundaries(scn)
    if len(bcs) != 2:
        raise ScenarioError("boundary: two-region scenarios need one mapping per subdomain")
    cp = CoupledProblem(pair, scn.models, bcs, scn.solver, scn.coupling, gravity=scn.data.get("gravity", True))
    specs = _initial_specs(scn)
    u1 = initial_u(specs[0], pair.mesh_1, scn.models[0])
    u2 = initial_u(specs[1], pair.mesh_2, scn.models[1])
    s1, s2 = cp.initial_states(u1, u2)
    rows = []
    summary = {"status": "ok", "scheme": "newton_u"}
    n = scn.solver.n_steps

    def on_step(a, b, it):
        rows.append(len(rows))
        if not quiet and len(rows) % max(1, n // 10) == 0:
            log.info("%s: t=%.6g (%d/%d), %d Schwarz iterations", scn.name, a.t, len(rows), n, it)

    traj = None
    try:
        traj = run_coupled(cp, s1, s2, scn.output.get("times"), on_step)
        diags = traj.diagnostics
    except SOLVER_FAILURES as exc:
        summary.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        log.error("%s failed: %s", scn.name, exc)
        diags = []
    out.write_csv(
        outdir / "dd.csv",
        DD_COLUMNS + ("newton_iters",),
        [(float(t), it, float(c), float(j), nw) for t, it, c, j, nw in diags],
    )
    summary["steps"] = len(diags)
    if diags:
        summary["mean_schwarz_iterations"] = float(np.mean([d[1] for d in diags]))
        summary["max_schwarz_iterations"] = int(max(d[1] for d in diags))
        summary["max_pressure_jump"] = float(max(d[3] for d in diags))
    if traj is None:
        return 1, summary
    psi_ok = True
    for st in traj.states:
        for model, s in zip(scn.models, st):
            psi = out.nodal_fields(model, s.u, ("psi",))["psi"]
            psi_ok &= bool(np.all(np.isfinite(psi)))
    summary["psi_finite"] = psi_ok
    _write_2d(scn, outdir, pair, scn.models, traj.times, traj.states)
    return 0, summary


def _workers():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _mms_options(scn):
    cfg = {k: v for k, v in scn.data["solver"].items() if k not in ("dt", "t_end")}
    cfg["scheme"] = scn.solver.scheme
    return cfg


def convergence_levels(scn, axis, k=None):
    """Refinement levels of ``axis``: the configured list, cut or extended by halving to ``k``."""
    ver = scn.data.get("verification", {})
    if axis == "space":
        conf = ver.get("space", {"levels": [scn.data["geometry"]["n"]], "dt": scn.solver.dt})
        levels = list(conf["levels"])
        nxt = lambda v: 2 * v  # noqa: E731
    elif axis == "time":
        conf = ver.get("time", {"levels": [scn.solver.dt], "n": scn.data["geometry"]["n"]})
        levels = list(conf["levels"])
        nxt = lambda v: v / 2.0  # noqa: E731
    else:
        raise ScenarioError(f"unknown convergence axis {axis!r}")
    k = len(levels) if k is None else k
    while len(levels) < k:
        levels.append(nxt(levels[-1]))
    return levels[:k], conf


def run_convergence(scn, axis, k=None, outdir=None, workers=None):
    """Manufactured-solution convergence study along ``axis``; writes ``<axis>.csv``."""
    if scn.kind != "mms":
        raise ScenarioError("convergence studies need a manufactured-solution scenario (kind: mms)")
    levels, conf = convergence_levels(scn, axis, k)
    if len(levels) < 3:
        raise ScenarioError("a convergence study needs at least three levels")
    workers = workers or _workers()
    opts = _mms_options(scn)
    t_end = scn.solver.t_end
    if axis == "space":
        rep = vf.space_convergence(levels, conf["dt"], t_end, scn.models[0], workers=workers, **opts)
    else:
        rep = vf.time_convergence(levels, conf["n"], t_end, scn.models[0], workers=workers, **opts)
    if outdir is not None:
        rep.to_csv(Path(outdir) / f"{axis}.csv")
    return rep


def _run_mms(scn, outdir, quiet, mesh_n=None, dt=None):
    summary = {"status": "ok"}
    if mesh_n or dt or "verification" not in scn.data:
        n = mesh_n or scn.data["geometry"]["n"]
        step = dt or scn.solver.dt
        opts = _mms_options(scn)
        try:
            prob, state = vf.mms_problem(n, step, scn.solver.t_end, scn.models[0], **opts)
            traj = run_transient(prob, state, scn.output.get("times"))
        except SOLVER_FAILURES as exc:
            summary.update(status="failed", error=str(exc))
            return 1, summary
        err = l2_norm_error(prob.mesh, traj.final.u, lambda X: vf.mms_exact(X, scn.solver.t_end, scn.models[0]))
        _write_profiles(outdir / "profiles.csv", prob.mesh, scn.models[0], traj.times, traj.states, _fields(scn))
        summary.update(n=n, dt=step, l2_error=err)
        return 0, summary
    for axis in ("space", "time"):
        if axis not in scn.data["verification"]:
            continue
        try:
            rep = run_convergence(scn, axis, outdir=outdir)
        except SOLVER_FAILURES as exc:
            summary.update(status="failed", error=f"{axis} study: {exc}")
            return 1, summary
        if not quiet:
            log.info("%s convergence\n%s", axis, rep)
        summary[axis] = {"errors": rep.errors, "orders": rep.orders}
    return 0, summary


def run(scn, outdir, quiet=False, scheme=None, dt=None, mesh_n=None):
    """Run one scenario and write its outputs into ``outdir``.

    Returns a :class:`RunResult` whose ``status`` is 0 on success and 1 when
    any time step, Newton solve or Schwarz iteration failed.
    """
    outdir = Path(out.ensure_dir(outdir))
    t0 = time.perf_counter()
    clamps = cm.clamp_log.count
    if scn.kind == "mms":
        scn = _apply_overrides(scn, scheme, None)
        status, summary = _run_mms(scn, outdir, quiet, mesh_n, dt)
        info = {"nodes": (mesh_n or scn.data["geometry"]["n"]) + 1}
    else:
        scn = _apply_overrides(scn, scheme, dt)
        geom = build_geometry(scn, mesh_n)
        info = _mesh_info(geom)
        if scn.two_region:
            status, summary = _run_coupled(scn, geom, outdir, quiet)
        else:
            status, summary = _run_single(scn, geom, outdir, quiet)
    summary["clamp_events"] = cm.clamp_log.count - clamps
    summary["wall_seconds"] = round(time.perf_counter() - t0, 3)
    _write_record(outdir, scn, summary, info)
    return RunResult(status, outdir, summary)


def run_all(runs, outdir, **kw):
    """Run every expanded scenario; sweeps go to one subdirectory per value."""
    results = []
    for scn in runs:
        sub = Path(outdir) / scn.label if scn.label else Path(outdir)
        results.append(run(scn, sub, **kw))
    return results


def dump_schema(path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(SCHEMA, fh, indent=2)
        fh.write("\n")


def scenario_copy(scn, **solver_changes):
    """Copy of ``scn`` with solver fields replaced (used by tests and studies)."""
    return replace(scn, data=copy.deepcopy(scn.data), solver=replace(scn.solver, **solver_changes))


def _isfinite_number(x):
    return isinstance(x, (int, float)) and math.isfinite(x)
