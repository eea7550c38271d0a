"""CSV tables and VTK legacy ASCII files for nodal fields.

Every number goes through one fixed format so repeated runs of the same
configuration give byte-identical files.
"""
from __future__ import annotations

import csv
import os

import numpy as np

from . import constitutive as cm
from . import transform as tr
from .mesh import InterfacePair

NUMBER = "{:.10e}"
FIELDS = ("u", "S", "theta", "psi")
#: stand-in for an infinite pressure head in VTK files, which have no inf literal
VTK_NEG_INF = -1e30


def fmt(x):
    return NUMBER.format(float(x))


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; floats use the fixed scientific format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def nodal_fields(model, u, names=FIELDS):
    """Dictionary of the requested nodal fields derived from ``u``.

    ``S`` and ``theta`` use the clipped map; ``psi`` the extended one,
    positive above saturation and ``-inf`` where ``u <= 0``.
    """
    u = np.asarray(u, dtype=float)
    S = tr.S_from_u(model, np.clip(u, 0.0, tr.u_max(model)))
    out = {}
    for name in names:
        if name == "u":
            out["u"] = u
        elif name == "S":
            out["S"] = S
        elif name == "theta":
            out["theta"] = cm.water_content(model, S)
        elif name == "psi":
            out["psi"] = tr.pressure_from_u(model, u)
        else:
            raise ValueError(f"unknown output field {name!r}")
    return out


def log_head(psi):
    """``-ln(1 + |psi|)``; finite wherever ``psi`` is."""
    return -np.log1p(np.abs(psi))


_VTK_CELL = {1: 3, 2: 5}


def write_vtk(path, nodes, cells, point_data, cell_data=None, title="urichards"):
    """Unstructured grid in legacy VTK 2.0 ASCII.

    ``nodes`` is ``(N, d)`` with ``d`` in {1, 2}; ``cells`` are lines or
    triangles. Non-finite values are written as :data:`VTK_NEG_INF` (or 0 for NaN).
    """
    nodes = np.asarray(nodes, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    dim = nodes.shape[1]
    N = nodes.shape[0]
    xyz = np.zeros((N, 3))
    xyz[:, :dim] = nodes
    lines = ["# vtk DataFile Version 2.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {N} double"]
    lines += [" ".join(fmt(c) for c in p) for p in xyz]
    k = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (k + 1)}")
    lines += [f"{k} " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(_VTK_CELL[dim])] * len(cells)

    def scalars(name, vals, kind):
        vals = np.nan_to_num(np.asarray(vals, dtype=float), nan=0.0, neginf=VTK_NEG_INF, posinf=-VTK_NEG_INF)
        out = [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"]
        return out + [fmt(v) if kind == "double" else str(int(v)) for v in vals]

    if point_data:
        lines.append(f"POINT_DATA {N}")
        for name, vals in point_data.items():
            lines += scalars(name, vals, "double")
    if cell_data:
        lines.append(f"CELL_DATA {len(cells)}")
        for name, vals in cell_data.items():
            lines += scalars(name, vals, "int")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mesh_vtk(path, mesh, fields, title="urichards"):
    """Nodal fields on one mesh, or on both meshes of an :class:`InterfacePair`.

    For a pair the interface nodes are duplicated so discontinuous fields
    such as water content keep both one-sided values; a ``region`` cell
    field tells the layers apart. ``fields`` is then a pair of dictionaries.
    """
    if isinstance(mesh, InterfacePair):
        m1, m2 = mesh.mesh_1, mesh.mesh_2
        nodes = np.concatenate([m1.nodes, m2.nodes])
        cells = np.concatenate([m1.elements, m2.elements + m1.num_nodes])
        data = {k: np.concatenate([fields[0][k], fields[1][k]]) for k in fields[0]}
        region = np.r_[np.ones(m1.num_elements), 2 * np.ones(m2.num_elements)]
        write_vtk(path, nodes, cells, data, {"region": region}, title)
    else:
        write_vtk(path, mesh.nodes, mesh.elements, fields, None, title)


def locate(mesh, points, tol=1e-9):
    """Element index and barycentric weights of each point (``-1`` if outside)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        a, b = P[:, 0, 0], P[:, 1, 0]
        x = points[:, 0][:, None]
        lam1 = (x - a) / (b - a)
        lam = np.stack([1.0 - lam1, lam1], axis=-1)
    else:
        v0, v1, v2 = P[:, 0], P[:, 1], P[:, 2]
        det = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])
        dx = points[:, 0][:, None] - v0[:, 0]
        dy = points[:, 1][:, None] - v0[:, 1]
        l1 = (dx * (v2[:, 1] - v0[:, 1]) - dy * (v2[:, 0] - v0[:, 0])) / det
        l2 = (dy * (v1[:, 0] - v0[:, 0]) - dx * (v1[:, 1] - v0[:, 1])) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
    inside = np.all(lam >= -tol, axis=-1)
    elem = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
    w = lam[np.arange(len(points)), np.maximum(elem, 0)]
    return elem, np.clip(w, 0.0, 1.0)


def sample(mesh, values, points):
    """Linear interpolation of a nodal field at ``points`` (NaN outside the mesh)."""
    elem, w = locate(mesh, points)
    vals = np.asarray(values, dtype=float)[mesh.elements[np.maximum(elem, 0)]]
    with np.errstate(invalid="ignore"):
        out = np.sum(np.where(w > 0.0, w * vals, 0.0), axis=1)
    out[elem < 0] = np.nan
    return out


def vertical_cut(meshes, fields, x0, npts, extent):
    """Rows ``(region, z, field...)`` along the line ``x = x0``.

    ``meshes`` and ``fields`` are parallel sequences, one per subdomain;
    points on a shared interface appear once per subdomain.
    """
    z = np.linspace(extent[0], extent[1], npts)
    pts = np.stack([np.full(npts, float(x0)), z], axis=1)
    names = list(fields[0])
    rows = []
    for r, (mesh, fd) in enumerate(zip(meshes, fields), start=1):
        elem, _ = locate(mesh, pts)
        hit = elem >= 0
        cols = [sample(mesh, fd[k], pts[hit]) for k in names]
        for i, zi in enumerate(z[hit]):
            rows.append((r, zi, *[c[i] for c in cols]))
    rows.sort(key=lambda row: (row[1], row[0]))
    return ["region", "z"] + names, rows


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
