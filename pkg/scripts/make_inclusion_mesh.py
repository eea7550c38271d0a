"""Generate the disk-inclusion mesh shipped as ``fixtures/inclusion.msh``.

The square (0, 100)^2 holds a disk of radius 25 centred at (50, 50). Nodes
are placed on concentric rings around the centre (so the circle itself is a
ring of nodes) and on a uniform grid further out; a Delaunay triangulation
then recovers the circle as a chain of edges. The script checks that no
triangle crosses the circle before writing a Gmsh 2.2 ASCII file with the
physical groups ``boundary`` (square edges), ``outer`` and ``inclusion``.

    python3 scripts/make_inclusion_mesh.py [h] [output]
"""
import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

L, R, CX, CY = 100.0, 25.0, 50.0, 50.0


def ring(r, h):
    k = max(6, int(round(2.0 * np.pi * r / h)))
    a = 2.0 * np.pi * np.arange(k) / k
    return np.stack([CX + r * np.cos(a), CY + r * np.sin(a)], axis=1)


def build_points(h):
    n_in = int(round(R / h))
    pts = [np.array([[CX, CY]])]
    pts += [ring(R * k / n_in, h) for k in range(1, n_in + 1)]
    r_out = [R + k * h for k in (1, 2)]
    for r in r_out:
        p = ring(r, h)
        pts.append(p[np.all((p > 0.5 * h) & (p < L - 0.5 * h), axis=1)])
    n = int(round(L / h))
    g = np.linspace(0.0, L, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    grid = np.stack([X.ravel(), Y.ravel()], axis=1)
    rr = np.hypot(grid[:, 0] - CX, grid[:, 1] - CY)
    pts.append(grid[rr > r_out[-1] + 0.6 * h])
    return np.concatenate(pts)


def triangulate(h):
    P = build_points(h)
    tri = Delaunay(P)
    T = tri.simplices
    if np.unique(T).size != len(P):
        raise RuntimeError("triangulation dropped points")
    e1, e2 = P[T[:, 1]] - P[T[:, 0]], P[T[:, 2]] - P[T[:, 0]]
    A = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    T = T[A > 1e-10 * h * h]
    r = np.hypot(P[:, 0] - CX, P[:, 1] - CY)
    tol = 1e-9
    inside = np.all(r[T] <= R + tol, axis=1)
    outside = np.all(r[T] >= R - tol, axis=1)
    if not np.all(inside | outside):
        raise RuntimeError("a triangle crosses the circle; change h")
    # triangles with all three nodes on the circle are outside iff centroid is
    cen = P[T].mean(axis=1)
    region = np.where(np.hypot(cen[:, 0] - CX, cen[:, 1] - CY) < R, 3, 2)
    return P, T, region


def boundary_lines(P, h):
    lines = []
    for axis, val in ((1, 0.0), (0, L), (1, L), (0, 0.0)):
        on = np.nonzero(np.abs(P[:, axis] - val) < 1e-9)[0]
        on = on[np.argsort(P[on, 1 - axis])]
        lines += list(zip(on[:-1], on[1:]))
    return lines


def write_msh(path, P, T, region, lines):
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write('$PhysicalNames\n3\n1 1 "boundary"\n2 2 "outer"\n2 3 "inclusion"\n$EndPhysicalNames\n')
        fh.write(f"$Nodes\n{len(P)}\n")
        for i, (x, y) in enumerate(P, start=1):
            fh.write(f"{i} {x:.12g} {y:.12g} 0\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{len(lines) + len(T)}\n")
        k = 1
        for a, b in lines:
            fh.write(f"{k} 1 2 1 1 {a + 1} {b + 1}\n")
            k += 1
        for (a, b, c), reg in zip(T, region):
            fh.write(f"{k} 2 2 {reg} {reg} {a + 1} {b + 1} {c + 1}\n")
            k += 1
        fh.write("$EndElements\n")


def main(argv):
    h = float(argv[1]) if len(argv) > 1 else 2.5
    out = Path(argv[2]) if len(argv) > 2 else Path(__file__).resolve().parents[1] / "src/urichards/fixtures/inclusion.msh"
    P, T, region = triangulate(h)
    write_msh(out, P, T, region, boundary_lines(P, h))
    print(f"{out}: {len(P)} nodes, {len(T)} triangles ({np.count_nonzero(region == 3)} in the inclusion)")


if __name__ == "__main__":
    main(sys.argv)
