"""P1 Galerkin assembly on simplicial meshes and the sparse linear solve.

Nodal coefficients are interpolated linearly over each element, so every
element integral below is exact for that polynomial. Accumulation goes
through a fixed CSR pattern with ``np.bincount``; results do not depend on
element ordering beyond floating-point summation order within a row.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SOLVE_RTOL = 1e-10
#: systems above this size use ILU-preconditioned GMRES instead of SuperLU
DIRECT_MAX = 250_000


class AssemblyError(ValueError):
    """Invalid assembly input."""


class LinearSolveError(ArithmeticError):
    """Linear solve failed or missed the residual contract."""

    def __init__(self, msg, residual=float("nan")):
        super().__init__(f"{msg} (relative residual {residual:.3e})")
        self.residual = residual


# Gauss-Legendre on [0, 1] and a degree-5 rule on the reference triangle.
@functools.lru_cache(maxsize=16)
def _gauss_1d(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    lam = 0.5 * (x + 1.0)
    return np.stack([1.0 - lam, lam], axis=1), 0.5 * w


def _dunavant5():
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    pts += [(a1, b1, b1), (b1, a1, b1), (b1, b1, a1)]
    pts += [(a2, b2, b2), (b2, a2, b2), (b2, b2, a2)]
    w = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
    return np.array(pts), np.array(w)


def quadrature(dim, npts=5):
    """Barycentric points and weights (summing to 1) of an element rule."""
    if dim == 1:
        return _gauss_1d(npts)
    return _dunavant5()


def _triple_product_tensor(d):
    """``W[i, j, k] = int lambda_i lambda_j lambda_k / |T|`` on a ``d``-simplex."""
    n = d + 1
    W = np.empty((n, n, n))
    for i, j, k in product(range(n), repeat=3):
        mult = np.bincount([i, j, k], minlength=n)
        W[i, j, k] = math.factorial(d) * np.prod([math.factorial(m) for m in mult]) / math.factorial(d + 3)
    return W


@dataclass
class SparseSystem:
    """Matrix, right-hand side and prescribed nodal values."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: dict = field(default_factory=dict)


class Assembler:
    """Geometry and sparsity data of one mesh, reused across assemblies."""

    def __init__(self, mesh):
        self.mesh = mesh
        d = mesh.dim
        self.dim = d
        self.n = mesh.num_nodes
        E = mesh.elements
        self.meas = mesh.element_measures()
        if np.any(self.meas <= 0.0):
            raise AssemblyError("negative or zero element measure")
        # barycentric gradients: solve [1 x]^T system per element
        p = mesh.nodes[E]
        J = (p[:, 1:, :] - p[:, :1, :]).transpose(0, 2, 1)  # (E, d, d)
        Jinv = np.linalg.inv(J)
        g = np.empty((len(E), d + 1, d))
        g[:, 1:, :] = Jinv
        g[:, 0, :] = -Jinv.sum(axis=1)
        self.grads = g
        self.gg = np.einsum("eik,ejk->eij", g, g)
        self.W = _triple_product_tensor(d)
        self.M0 = self.W.sum(axis=2)
        rows = np.repeat(E, d + 1, axis=1).ravel()
        cols = np.tile(E, (1, d + 1)).ravel()
        key = rows * self.n + cols
        uniq, inv = np.unique(key, return_inverse=True)
        self.scatter = inv.ravel()
        self.nnz = uniq.size
        r = uniq // self.n
        c = uniq % self.n
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=self.n))])
        self.indices = c.astype(np.int32)
        self.keys = uniq
        self.rows = r
        self.cols = c
        self.diag_pos = self.positions(np.arange(self.n), np.arange(self.n))
        self.tridiagonal = bool(np.all(np.abs(r - c) <= 1))
        self._facets = {}
        self._dir_cache = {}

    def positions(self, rows, cols):
        """Indices into the pattern data array of entries ``(rows, cols)``."""
        key = np.asarray(rows, dtype=np.int64) * self.n + np.asarray(cols, dtype=np.int64)
        pos = np.searchsorted(self.keys, key)
        if np.any(pos >= self.nnz) or np.any(self.keys[np.minimum(pos, self.nnz - 1)] != key):
            raise AssemblyError("entry outside the sparsity pattern")
        return pos

    def csr(self, data):
        return sp.csr_matrix((np.asarray(data, dtype=float), self.indices, self.indptr), shape=(self.n, self.n))

    def matvec(self, data, x):
        return np.bincount(self.rows, weights=data * x[self.cols], minlength=self.n)

    def stiffness_element_data(self, elem_coeff):
        """Stiffness data with one (averaged) coefficient per element."""
        local = (self.meas * np.asarray(elem_coeff, dtype=float))[:, None, None] * self.gg
        return np.bincount(self.scatter, weights=local.ravel(), minlength=self.nnz)

    def element_quadrature_values(self, nodal, func, npts=None):
        """Element average of ``func`` applied to the interpolant of ``nodal``."""
        if self.dim == 1:
            lam, w = _gauss_1d(npts or 2)
        else:
            lam = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
            w = np.full(3, 1 / 3)
        vq = np.asarray(nodal, dtype=float)[self.mesh.elements] @ lam.T
        return func(vq) @ w

    def facet_mass_data(self, tag):
        """Boundary mass of ``tag`` scattered into the element pattern."""
        M = self.facet_mass(tag).tocoo()
        out = np.zeros(self.nnz)
        np.add.at(out, self.positions(M.row, M.col), M.data)
        return out

    def dirichlet_data(self, data, rhs, nodes, values):
        """In-place elimination of prescribed nodes on pattern data."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            return data, rhs
        key = nodes.tobytes()
        if key not in self._dir_cache:
            mark = np.zeros(self.n, dtype=bool)
            mark[nodes] = True
            self._dir_cache[key] = (mark[self.rows] | mark[self.cols], self.diag_pos[nodes])
        kill, dpos = self._dir_cache[key]
        xd = np.zeros(self.n)
        xd[nodes] = values
        rhs = rhs - self.matvec(data, xd)
        data = np.where(kill, 0.0, data)
        data[dpos] = 1.0
        rhs[nodes] = values
        return data, rhs

    def solve(self, data, rhs, rtol=SOLVE_RTOL, direct_max=DIRECT_MAX):
        """Solve a pattern-data system; tridiagonal patterns skip CSR construction."""
        if self.tridiagonal:
            b = np.asarray(rhs, dtype=float)
            bn = np.linalg.norm(b)
            if bn == 0.0:
                return np.zeros_like(b)
            ab = self._banded(data)
            try:
                with np.errstate(all="raise"):
                    x = sla.solve_banded((1, 1), ab, b, check_finite=False)
            except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
                raise LinearSolveError(f"banded solve failed: {exc}") from exc
            res = np.linalg.norm(self.matvec(data, x) - b) / bn
            if not res <= rtol:
                x = x + sla.solve_banded((1, 1), ab, b - self.matvec(data, x), check_finite=False)
                res = np.linalg.norm(self.matvec(data, x) - b) / bn
                if not res <= rtol:
                    raise LinearSolveError("banded solve missed tolerance", res)
            return x
        return solve_linear(self.csr(data), rhs, rtol, direct_max)

    def _banded(self, data):
        ab = np.zeros((3, self.n))
        ab[1 + self.rows - self.cols, self.cols] = data
        return ab

    def scatter_data(self, local):
        """Accumulate element matrices ``(E, d+1, d+1)`` into pattern data."""
        return np.bincount(self.scatter, weights=local.ravel(), minlength=self.nnz)

    def matrix(self, local):
        return self.csr(self.scatter_data(local))

    def vector(self, local):
        return np.bincount(self.mesh.elements.ravel(), weights=local.ravel(), minlength=self.n)

    def mass(self, weight=None, lumped=False):
        return self.csr(self.mass_data(weight, lumped))

    def mass_data(self, weight=None, lumped=False):
        E = self.mesh.elements
        if weight is None:
            local = self.meas[:, None, None] * self.M0[None]
        else:
            w = np.asarray(weight, dtype=float)
            if w.shape == ():
                w = np.full(self.n, float(w))
            local = self.meas[:, None, None] * np.einsum("ijk,ek->eij", self.W, w[E])
        if lumped:
            rs = local.sum(axis=2)
            local = np.zeros_like(local)
            idx = np.arange(self.dim + 1)
            local[:, idx, idx] = rs
        return self.scatter_data(local)

    def stiffness(self, diffusivity):
        return self.csr(self.stiffness_data(diffusivity))

    def stiffness_data(self, diffusivity):
        D = np.asarray(diffusivity, dtype=float)
        if D.shape == ():
            avg = np.full(len(self.meas), float(D))
        else:
            avg = D[self.mesh.elements].mean(axis=1)
        return self.scatter_data((self.meas * avg)[:, None, None] * self.gg)

    def gravity(self, coeff):
        """``int coeff e_z . grad v`` with ``coeff`` nodal, ``e_z`` the last axis."""
        c = np.asarray(coeff, dtype=float)
        if c.shape == ():
            avg = np.full(len(self.meas), float(c))
        else:
            avg = c[self.mesh.elements].mean(axis=1)
        return self.vector((self.meas * avg)[:, None] * self.grads[:, :, -1])

    def source(self, func, npts=5):
        """``int f v`` with ``f(coords)`` evaluated at element quadrature points."""
        lam, w = quadrature(self.dim, npts)
        X = np.einsum("qi,eid->eqd", lam, self.mesh.nodes[self.mesh.elements])
        pts = X[..., 0] if self.dim == 1 else X
        f = np.asarray(func(pts), dtype=float)
        local = self.meas[:, None] * np.einsum("q,eq,qi->ei", w, f, lam)
        return self.vector(local)

    def facet_data(self, tag):
        """Facet connectivity, measures and outward normal z-component for a tag."""
        if tag not in self._facets:
            idx = self.mesh.facets_with_tag(tag)
            if idx.size == 0:
                raise AssemblyError(f"no boundary facets tagged {tag!r}")
            nz = self.mesh.facet_normals()[idx, -1]
            self._facets[tag] = (self.mesh.facets[idx], self.mesh.facet_measures()[idx], nz)
        return self._facets[tag]

    def facet_mass(self, tag):
        """Boundary mass matrix ``int_tag phi_i phi_j ds``."""
        F, L, _ = self.facet_data(tag)
        k = F.shape[1]
        if k == 1:
            loc = L[:, None, None] * np.ones((1, 1, 1))
        else:
            loc = L[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])[None] / 6.0
        rows = np.repeat(F, k, axis=1).ravel()
        cols = np.tile(F, (1, k)).ravel()
        return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(self.n, self.n))

    def boundary(self, tag, kind, data):
        F, L, nz = self.facet_data(tag)
        Mf = self.facet_mass(tag)
        vals = np.asarray(data, dtype=float)
        if vals.shape == ():
            vals = np.full(self.n, float(vals))
        if kind == "neumann":
            return Mf @ vals
        if kind == "free_drainage":
            # e_z . n is constant per facet, so scale each facet's mass by it
            k = F.shape[1]
            loc = (L * nz)[:, None, None] * (np.ones((1, 1, 1)) if k == 1 else np.array([[2.0, 1.0], [1.0, 2.0]])[None] / 6.0)
            rows = np.repeat(F, k, axis=1).ravel()
            cols = np.tile(F, (1, k)).ravel()
            Mz = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(self.n, self.n))
            return Mz @ vals
        raise AssemblyError(f"unknown boundary integrand {kind!r}")


def get_assembler(mesh):
    asm = getattr(mesh, "_assembler_cache", None)
    if asm is None:
        asm = Assembler(mesh)
        object.__setattr__(mesh, "_assembler_cache", asm)
    return asm


def assemble_mass_weighted(mesh, weight_at_nodes=None, lumped=False):
    """Mass matrix ``int w phi_i phi_j`` for a nodal (linearly interpolated) weight."""
    return get_assembler(mesh).mass(weight_at_nodes, lumped)


def assemble_stiffness_weighted(mesh, diffusivity_at_nodes):
    """Stiffness ``int D grad phi_i . grad phi_j`` with ``D`` linearly interpolated."""
    return get_assembler(mesh).stiffness(diffusivity_at_nodes)


def assemble_gravity(mesh, coeff_at_nodes):
    """Vector ``int c e_z . grad phi_i`` (pass ``K_s * g_scale * Kr`` as ``c``)."""
    return get_assembler(mesh).gravity(coeff_at_nodes)


def assemble_boundary(mesh, tag, integrand_kind, data):
    """Facet integrals on the facets carrying ``tag``.

    ``"neumann"``: ``int q phi_i ds``; ``"free_drainage"``:
    ``int c e_z.n phi_i ds`` with ``c = K_s g_scale Kr`` nodal.
    """
    return get_assembler(mesh).boundary(tag, integrand_kind, data)


def assemble_source(mesh, func, npts=5):
    return get_assembler(mesh).source(func, npts)


def apply_dirichlet(matrix, rhs, nodes, values):
    """Eliminate prescribed nodes: identity rows and columns, rhs updated.

    Returns a new ``(matrix, rhs)`` pair; the input is not modified.
    """
    A = sp.csr_matrix(matrix)
    b = np.array(rhs, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        return A, b
    vals = np.broadcast_to(np.asarray(values, dtype=float), nodes.shape)
    xd = np.zeros(A.shape[0])
    xd[nodes] = vals
    b -= A @ xd
    keep = np.ones(A.shape[0])
    keep[nodes] = 0.0
    K = sp.diags(keep)
    A = (K @ A @ K + sp.diags(1.0 - keep)).tocsr()
    A.eliminate_zeros()
    b[nodes] = vals
    return A, b


def _bandwidth(A):
    coo = A.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.abs(coo.row - coo.col).max())


def _solve_once(A, b, direct_max):
    n = A.shape[0]
    if _bandwidth(A) <= 1:
        ab = np.zeros((3, n))
        ab[0, 1:] = A.diagonal(1)
        ab[1] = A.diagonal()
        ab[2, :-1] = A.diagonal(-1)
        return sla.solve_banded((1, 1), ab, b, check_finite=False)
    if n <= direct_max:
        return spla.splu(A.tocsc()).solve(b)
    ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
    P = spla.LinearOperator(A.shape, ilu.solve)
    x, info = spla.gmres(A, b, M=P, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
    if info != 0:
        raise LinearSolveError("GMRES did not converge", np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    return x


def solve_linear(matrix, rhs, rtol=SOLVE_RTOL, direct_max=DIRECT_MAX):
    """Solve ``A x = b`` and check ``||A x - b|| / ||b|| <= rtol``.

    Tridiagonal systems use a banded solve, moderate ones SuperLU and large
    ones ILU-preconditioned GMRES. One refinement step is tried before
    raising :class:`LinearSolveError`.
    """
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return np.zeros_like(b)
    try:
        with np.errstate(all="raise"):
            x = _solve_once(A, b, direct_max)
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveError(f"factorization failed: {exc}") from exc
    res = np.linalg.norm(A @ x - b) / bn
    if not res <= rtol:
        x = x + _solve_once(A, b - A @ x, direct_max)
        res = np.linalg.norm(A @ x - b) / bn
        if not res <= rtol:
            raise LinearSolveError("linear solve missed tolerance", res)
    return x


def l2_norm_error(mesh, fh, f_exact, npts=5):
    """``||f_exact - f_h||_{L2}`` with element Gauss quadrature (degree >= 5 in 2D)."""
    lam, w = quadrature(mesh.dim, npts)
    E = mesh.elements
    X = np.einsum("qi,eid->eqd", lam, mesh.nodes[E])
    pts = X[..., 0] if mesh.dim == 1 else X
    fq = np.einsum("qi,ei->eq", lam, np.asarray(fh, dtype=float)[E])
    ex = np.broadcast_to(np.asarray(f_exact(pts), dtype=float), fq.shape)
    meas = mesh.element_measures()
    return float(np.sqrt(np.sum(meas[:, None] * w[None, :] * (ex - fq) ** 2)))
