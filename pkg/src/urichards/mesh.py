"""Conforming simplicial meshes (intervals and triangles) with tagged boundary facets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

DIRICHLET_TOP = "dirichlet_top"
NEUMANN = "neumann"
FREE_DRAINAGE = "free_drainage"
INTERFACE = "interface"


class MeshError(ValueError):
    """Invalid or non-conforming mesh."""


class GeometryError(MeshError):
    """Geometry description that cannot be meshed."""


class MshFormatError(MeshError):
    """Malformed or unsupported MSH file."""


@dataclass
class Mesh:
    """Simplicial mesh.

    ``nodes`` is ``(N, d)``, ``elements`` is ``(E, d+1)``, ``facets`` is
    ``(F, d)`` holding boundary facets only, with one string tag each.
    The last coordinate is the vertical ``z`` axis.
    """

    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    element_regions: Optional[np.ndarray] = None
    _owner: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes[:, None]
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, self.dim + 1)
        self.facets = np.asarray(self.facets, dtype=np.int64).reshape(-1, self.dim)
        self.facet_tags = np.asarray(self.facet_tags, dtype=object)
        for arr in (self.elements, self.facets):
            if arr.size and (arr.min() < 0 or arr.max() >= self.num_nodes):
                raise MeshError("connectivity references a missing node")
        if self.dim == 2:
            self._orient()
        self.validate()

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    def _orient(self):
        p = self.nodes[self.elements]
        area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (
            p[:, 1, 1] - p[:, 0, 1]
        )
        flip = area2 < 0
        self.elements[flip, 1], self.elements[flip, 2] = self.elements[flip, 2].copy(), self.elements[flip, 1].copy()

    def element_measures(self):
        p = self.nodes[self.elements]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def validate(self):
        """Check positive measures, conformity and that tagged facets lie on the boundary."""
        meas = self.element_measures()
        if np.any(meas <= 0.0):
            raise MeshError("element with non-positive measure")
        counts = {}
        owner = {}
        for e, elem in enumerate(self.elements):
            for f in combinations(sorted(elem), self.dim):
                counts[f] = counts.get(f, 0) + 1
                owner[f] = e
        if any(c > 2 for c in counts.values()):
            raise MeshError("facet shared by more than two elements")
        own = np.empty(len(self.facets), dtype=np.int64)
        for k, f in enumerate(self.facets):
            key = tuple(sorted(f))
            if counts.get(key) != 1:
                raise MeshError(f"tagged facet {key} is not a boundary facet")
            own[k] = owner[key]
        self._owner = own
        if len(self.facet_tags) != len(self.facets):
            raise MeshError("one tag per boundary facet required")
        n_boundary = sum(1 for c in counts.values() if c == 1)
        if n_boundary != len(self.facets):
            raise MeshError(f"{n_boundary - len(self.facets)} boundary facets are untagged")

    @property
    def facet_owner(self):
        return self._owner

    def facet_normals(self):
        """Outward unit normals of the boundary facets, shape ``(F, d)``."""
        if self.dim == 1:
            centre = self.nodes[self.elements[self._owner]].mean(axis=1)[:, 0]
            x = self.nodes[self.facets[:, 0], 0]
            return np.sign(x - centre)[:, None]
        a = self.nodes[self.facets[:, 0]]
        b = self.nodes[self.facets[:, 1]]
        t = b - a
        nrm = np.stack([t[:, 1], -t[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        centre = self.nodes[self.elements[self._owner]].mean(axis=1)
        flip = np.einsum("ij,ij->i", nrm, 0.5 * (a + b) - centre) < 0
        nrm[flip] *= -1.0
        return nrm

    def facet_measures(self):
        if self.dim == 1:
            return np.ones(len(self.facets))
        return np.linalg.norm(self.nodes[self.facets[:, 1]] - self.nodes[self.facets[:, 0]], axis=1)

    def tags(self):
        return sorted(set(self.facet_tags.tolist()))

    def facets_with_tag(self, tag):
        return np.nonzero(self.facet_tags == tag)[0]

    def nodes_with_tag(self, tag):
        idx = self.facets_with_tag(tag)
        return np.unique(self.facets[idx].ravel())

    def retag(self, rule: Callable[[np.ndarray, str], Optional[str]]):
        """Apply ``rule(facet_midpoint, tag) -> new tag or None`` to every boundary facet."""
        mids = self.nodes[self.facets].mean(axis=1)
        new = self.facet_tags.copy()
        for k, (mid, tag) in enumerate(zip(mids, self.facet_tags)):
            t = rule(mid, tag)
            if t is not None:
                new[k] = t
        self.facet_tags = new
        return self


@dataclass
class InterfacePair:
    """Two subdomain meshes sharing coincident nodes along the interface."""

    mesh_1: Mesh
    mesh_2: Mesh
    gamma_nodes_1: np.ndarray
    gamma_nodes_2: np.ndarray

    def __post_init__(self):
        self.gamma_nodes_1 = np.asarray(self.gamma_nodes_1, dtype=np.int64)
        self.gamma_nodes_2 = np.asarray(self.gamma_nodes_2, dtype=np.int64)
        if self.gamma_nodes_1.shape != self.gamma_nodes_2.shape:
            raise MeshError("interface node lists differ in length")
        gap = np.abs(self.mesh_1.nodes[self.gamma_nodes_1] - self.mesh_2.nodes[self.gamma_nodes_2]).max(initial=0.0)
        if gap > 1e-12:
            raise MeshError(f"paired interface nodes differ by {gap:.3e}")
        for m in (self.mesh_1, self.mesh_2):
            if len(m.facets_with_tag(INTERFACE)) == 0:
                raise MeshError("interface facets must be tagged on both meshes")


def interval_mesh(n, a, b):
    """Uniform mesh of ``[a, b]`` with ``n`` elements; endpoints tagged ``bottom``/``top``."""
    if n < 1 or not a < b:
        raise GeometryError("need n >= 1 and a < b")
    x = np.linspace(a, b, n + 1)
    elems = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return Mesh(x[:, None], elems, [[0], [n]], ["bottom", "top"])


def _structured(X, pattern, side_tags):
    """Triangulate a logically rectangular grid of corner points ``X[i, j]``."""
    nx, ny = X.shape[0] - 1, X.shape[1] - 1
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    nodes = [X.reshape(-1, 2)]
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    if pattern == "crossed":
        centres = 0.25 * (X[:-1, :-1] + X[1:, :-1] + X[1:, 1:] + X[:-1, 1:]).reshape(-1, 2)
        e = (nx + 1) * (ny + 1) + np.arange(nx * ny)
        nodes.append(centres)
        elems = np.concatenate(
            [np.stack(t, axis=1) for t in ((a, b, e), (b, c, e), (c, d, e), (d, a, e))], axis=0
        )
        # interleave per cell for locality
        elems = elems.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    elif pattern == "diagonal":
        elems = np.stack([np.stack((a, b, c), axis=1), np.stack((a, c, d), axis=1)], axis=1).reshape(-1, 3)
    else:
        raise GeometryError(f"unknown triangulation pattern {pattern!r}")
    facets, tags = [], []
    for i in range(nx):
        facets.append((idx[i, 0], idx[i + 1, 0]))
        tags.append(side_tags["bottom"])
        facets.append((idx[i, ny], idx[i + 1, ny]))
        tags.append(side_tags["top"])
    for j in range(ny):
        facets.append((idx[0, j], idx[0, j + 1]))
        tags.append(side_tags["left"])
        facets.append((idx[nx, j], idx[nx, j + 1]))
        tags.append(side_tags["right"])
    return Mesh(np.concatenate(nodes), elems, facets, tags)


_SIDES = {"bottom": "bottom", "top": "top", "left": "left", "right": "right"}


def rectangle_mesh(nx, ny, extents=((0.0, 1.0), (0.0, 1.0)), tag_map=None, pattern="crossed"):
    """Structured triangulation of a box.

    ``tag_map`` is a list of ``(new_tag, side, (lo, hi))`` rules retagging the
    facets of ``side`` whose midpoint abscissa (or ordinate for left/right)
    falls in ``[lo, hi]``.
    """
    (x0, x1), (z0, z1) = extents
    if nx < 1 or ny < 1 or not (x0 < x1 and z0 < z1):
        raise GeometryError("degenerate rectangle")
    xs = np.linspace(x0, x1, nx + 1)
    zs = np.linspace(z0, z1, ny + 1)
    X = np.stack(np.meshgrid(xs, zs, indexing="ij"), axis=-1)
    mesh = _structured(X, pattern, _SIDES)
    if tag_map:
        apply_tag_rules(mesh, tag_map)
    return mesh


def apply_tag_rules(mesh, rules):
    def rule(mid, tag):
        for new_tag, side, (lo, hi) in rules:
            coord = mid[0] if side in ("top", "bottom") else mid[-1]
            if tag == side and lo - 1e-12 <= coord <= hi + 1e-12:
                return new_tag
        return None

    return mesh.retag(rule)


def manzini_interface(x):
    """Curved layer boundary ``xi(x) = 100 (0.1 (1 - cos(pi x / 100)) + 0.45)``."""
    return 100.0 * (0.1 * (1.0 - np.cos(np.pi * np.asarray(x, dtype=float) / 100.0)) + 0.45)


def layered_split(nx, ny, extents=((0.0, 100.0), (0.0, 100.0)), xi=manzini_interface, pattern="crossed", ny_bottom=None):
    """Split a box along ``z = xi(x)`` into two matched meshes.

    Returns an :class:`InterfacePair` with the upper layer as ``mesh_1`` and
    the lower layer as ``mesh_2``; ``ny`` (and ``ny_bottom``, default ``ny``)
    rows are mapped between the curve and the top/bottom edge.
    """
    (x0, x1), (z0, z1) = extents
    ny_bottom = ny if ny_bottom is None else ny_bottom
    xs = np.linspace(x0, x1, nx + 1)
    g = np.asarray(xi(xs), dtype=float)
    if not np.all(np.isfinite(g)) or np.any(g <= z0) or np.any(g >= z1):
        raise GeometryError("interface curve leaves the box")
    s_top = np.linspace(0.0, 1.0, ny + 1)
    s_bot = np.linspace(0.0, 1.0, ny_bottom + 1)
    Xt = np.empty((nx + 1, ny + 1, 2))
    Xt[:, :, 0] = xs[:, None]
    Xt[:, :, 1] = g[:, None] + s_top[None, :] * (z1 - g[:, None])
    Xt[:, 0, 1] = g
    Xb = np.empty((nx + 1, ny_bottom + 1, 2))
    Xb[:, :, 0] = xs[:, None]
    Xb[:, :, 1] = z0 + s_bot[None, :] * (g[:, None] - z0)
    Xb[:, -1, 1] = g
    top = _structured(Xt, pattern, {"bottom": INTERFACE, "top": "top", "left": "left", "right": "right"})
    bot = _structured(Xb, pattern, {"bottom": "bottom", "top": INTERFACE, "left": "left", "right": "right"})
    g1 = np.arange(nx + 1) * (ny + 1)
    g2 = np.arange(nx + 1) * (ny_bottom + 1) + ny_bottom
    return InterfacePair(top, bot, g1, g2)


def mesh_size(mesh):
    """Largest element diameter; accepts a :class:`Mesh` or :class:`InterfacePair`."""
    if isinstance(mesh, InterfacePair):
        return max(mesh_size(mesh.mesh_1), mesh_size(mesh.mesh_2))
    p = mesh.nodes[mesh.elements]
    best = np.zeros(mesh.num_elements)
    for i, j in combinations(range(mesh.dim + 1), 2):
        best = np.maximum(best, np.linalg.norm(p[:, i] - p[:, j], axis=1))
    return float(best.max())


def merge_pair(pair):
    """Glue an :class:`InterfacePair` back into one mesh (interface facets dropped)."""
    m1, m2 = pair.mesh_1, pair.mesh_2
    n1 = m1.num_nodes
    rest = np.setdiff1d(np.arange(m2.num_nodes), pair.gamma_nodes_2)
    remap = np.empty(m2.num_nodes, dtype=np.int64)
    remap[rest] = n1 + np.arange(rest.size)
    remap[pair.gamma_nodes_2] = pair.gamma_nodes_1
    nodes = np.concatenate([m1.nodes, m2.nodes[rest]])
    elems = np.concatenate([m1.elements, remap[m2.elements]])
    keep1 = m1.facet_tags != INTERFACE
    keep2 = m2.facet_tags != INTERFACE
    facets = np.concatenate([m1.facets[keep1], remap[m2.facets[keep2]]])
    tags = np.concatenate([m1.facet_tags[keep1], m2.facet_tags[keep2]])
    regions = np.array(["1"] * m1.num_elements + ["2"] * m2.num_elements, dtype=object)
    return Mesh(nodes, elems, facets, tags, element_regions=regions)


_MSH_NODES_PER_TYPE = {1: 2, 2: 3, 15: 1}


def read_msh(path, tag_names=None):
    """Read a Gmsh 2.2 ASCII file.

    Triangles become elements when present (lines are then boundary facets);
    otherwise lines are elements and points are facets. Physical groups give
    element regions and facet tags, renamed through ``tag_names`` if given.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    tag_names = dict(tag_names or {})

    def section(name):
        try:
            start = lines.index(f"${name}")
        except ValueError:
            return None
        end = lines.index(f"$End{name}", start)
        return lines[start + 1 : end]

    fmt = section("MeshFormat")
    if not fmt or not fmt[0].split()[0].startswith("2"):
        raise MshFormatError("only MSH 2.x ASCII is supported")
    if fmt[0].split()[1] != "0":
        raise MshFormatError("binary MSH files are not supported")
    names = {}
    for row in (section("PhysicalNames") or [])[1:]:
        parts = row.split(maxsplit=2)
        names[int(parts[1])] = parts[2].strip('"')
    node_rows = section("Nodes")
    elem_rows = section("Elements")
    if node_rows is None or elem_rows is None:
        raise MshFormatError("missing $Nodes or $Elements section")
    try:
        nn = int(node_rows[0])
        ids = np.empty(nn, dtype=np.int64)
        xyz = np.empty((nn, 3))
        for k, row in enumerate(node_rows[1 : nn + 1]):
            parts = row.split()
            ids[k] = int(parts[0])
            xyz[k] = [float(v) for v in parts[1:4]]
        ne = int(elem_rows[0])
        by_type = {1: [], 2: [], 15: []}
        for row in elem_rows[1 : ne + 1]:
            parts = [int(v) for v in row.split()]
            etype, ntags = parts[1], parts[2]
            if etype not in _MSH_NODES_PER_TYPE:
                raise MshFormatError(f"unsupported element type {etype}")
            phys = parts[3] if ntags > 0 else 0
            conn = parts[3 + ntags :]
            if len(conn) != _MSH_NODES_PER_TYPE[etype]:
                raise MshFormatError("wrong node count for element")
            by_type[etype].append((phys, conn))
    except (ValueError, IndexError) as exc:
        raise MshFormatError(f"malformed MSH file: {exc}") from exc
    index = {int(i): k for k, i in enumerate(ids)}

    def label(phys):
        name = names.get(phys, str(phys))
        return tag_names.get(name, name)

    if by_type[2]:
        dim, cells, faces = 2, by_type[2], by_type[1]
    else:
        dim, cells, faces = 1, by_type[1], by_type[15]
    if not cells:
        raise MshFormatError("no supported cells in file")
    used = sorted({index[v] for _, conn in cells for v in conn})
    renum = -np.ones(nn, dtype=np.int64)
    renum[used] = np.arange(len(used))
    nodes = xyz[used, :dim]
    elems = np.array([[renum[index[v]] for v in conn] for _, conn in cells])
    regions = np.array([label(p) for p, _ in cells], dtype=object)
    tagged = {}
    for phys, conn in faces:
        key = tuple(sorted(renum[index[v]] for v in conn))
        tagged[key] = label(phys)
    return _with_boundary(nodes, elems, regions, tagged, default_tag="boundary")


def _boundary_facets(elements, dim):
    counts = {}
    for elem in elements:
        for f in combinations(sorted(elem), dim):
            counts[f] = counts.get(f, 0) + 1
    return [f for f, c in counts.items() if c == 1], counts


def _with_boundary(nodes, elems, regions, tagged, default_tag):
    dim = nodes.shape[1]
    bnd, _ = _boundary_facets(elems, dim)
    facets = [list(f) for f in bnd]
    tags = [tagged.get(f, default_tag) for f in bnd]
    return Mesh(nodes, elems, facets, tags, element_regions=regions)


def split_regions(mesh, region_1, region_2):
    """Extract two element regions as an :class:`InterfacePair`.

    Facets shared by both regions are tagged ``interface`` on each side; other
    facets keep their tags from ``mesh``.
    """
    if mesh.element_regions is None:
        raise MeshError("mesh has no element regions")
    dim = mesh.dim
    known = {tuple(sorted(f)): t for f, t in zip(mesh.facets, mesh.facet_tags)}
    sel = [mesh.element_regions == region_1, mesh.element_regions == region_2]
    if not sel[0].any() or not sel[1].any():
        raise MeshError(f"regions {region_1!r}/{region_2!r} not found")
    faces = []
    for s in sel:
        faces.append({f for elem in mesh.elements[s] for f in combinations(sorted(elem), dim)})
    shared = faces[0] & faces[1]
    if not shared:
        raise MeshError("regions do not touch")
    gamma = np.array(sorted({v for f in shared for v in f}), dtype=np.int64)
    parts, gmaps = [], []
    for s in sel:
        elems = mesh.elements[s]
        used = np.unique(elems)
        renum = -np.ones(mesh.num_nodes, dtype=np.int64)
        renum[used] = np.arange(used.size)
        local = renum[elems]
        bnd, _ = _boundary_facets(local, dim)
        glob_of = used
        facets, tags = [], []
        for f in bnd:
            gkey = tuple(sorted(glob_of[list(f)]))
            facets.append(list(f))
            tags.append(INTERFACE if gkey in shared else known.get(gkey, "boundary"))
        parts.append(Mesh(mesh.nodes[used], local, facets, tags))
        gmaps.append(renum[gamma])
    return InterfacePair(parts[0], parts[1], gmaps[0], gmaps[1])
