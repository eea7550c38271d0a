import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from urichards import assembly as A
from urichards import mesh as M


def dense(mat):
    return mat.toarray()


class TestOneDimensional:
    def test_mass_element(self):
        m = M.interval_mesh(1, 0.0, 0.3)
        np.testing.assert_allclose(dense(A.assemble_mass_weighted(m)), 0.3 / 6 * np.array([[2, 1], [1, 2]]), rtol=1e-14)
        assert np.count_nonzero(dense(A.assemble_mass_weighted(m, np.zeros(2)))) == 0

    def test_stiffness_element(self):
        m = M.interval_mesh(1, 0.0, 0.25)
        K = dense(A.assemble_stiffness_weighted(m, 3.0 * np.ones(2)))
        np.testing.assert_allclose(K, 12.0 * np.array([[1, -1], [-1, 1]]), rtol=1e-14)
        assert np.count_nonzero(dense(A.assemble_stiffness_weighted(m, 0.0))) == 0

    def test_gravity_constant_telescopes(self):
        m = M.interval_mesh(8, 0.0, 1.0)
        g = A.assemble_gravity(m, 2.5 * np.ones(9))
        np.testing.assert_allclose(g[1:-1], 0.0, atol=1e-14)
        assert g[0] == pytest.approx(-2.5) and g[-1] == pytest.approx(2.5)
        np.testing.assert_array_equal(A.assemble_gravity(m, np.zeros(9)), 0.0)

    def test_gravity_linear_coefficient(self):
        # int c dphi_i/dz over an element is the element average of c times +-1
        m = M.interval_mesh(4, 0.0, 2.0)
        z = m.nodes[:, 0]
        c = 1.0 + 3.0 * z
        avg = 0.5 * (c[:-1] + c[1:])
        expect = np.zeros(5)
        expect[:-1] -= avg
        expect[1:] += avg
        np.testing.assert_allclose(A.assemble_gravity(m, c), expect, rtol=1e-14)

    def test_point_neumann(self):
        m = M.interval_mesh(3, 0.0, 1.0)
        b = A.assemble_boundary(m, "top", "neumann", 0.7)
        np.testing.assert_allclose(b, [0, 0, 0, 0.7])
        np.testing.assert_array_equal(A.assemble_boundary(m, "top", "neumann", 0.0), 0.0)

    def test_point_free_drainage_sign(self):
        m = M.interval_mesh(3, 0.0, 1.0)
        b = A.assemble_boundary(m, "bottom", "free_drainage", 2.0 * np.ones(4))
        np.testing.assert_allclose(b, [-2.0, 0, 0, 0])

    def test_poisson_ramp(self):
        m = M.interval_mesh(10, 0.0, 1.0)
        K = A.assemble_stiffness_weighted(m, 1.0)
        Kd, b = A.apply_dirichlet(K, np.zeros(11), [0, 10], [0.0, 1.0])
        x = A.solve_linear(Kd, b)
        np.testing.assert_allclose(x, m.nodes[:, 0], atol=1e-14)
        # the pattern-data route gives the same system
        asm = A.get_assembler(m)
        data, rhs = asm.dirichlet_data(asm.stiffness_data(1.0), np.zeros(11), np.array([0, 10]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(asm.csr(data).toarray(), Kd.toarray(), atol=1e-14)
        np.testing.assert_allclose(asm.solve(data, rhs), x, atol=1e-14)


class TestTwoDimensional:
    def test_stiffness_row_sums(self):
        for pattern in ("crossed", "diagonal"):
            m = M.rectangle_mesh(5, 4, ((0, 2), (0, 1)), pattern=pattern)
            D = 1.0 + m.nodes[:, 0] ** 2
            K = A.assemble_stiffness_weighted(m, D)
            np.testing.assert_allclose(np.asarray(K.sum(axis=1)).ravel(), 0.0, atol=1e-12)
            assert abs(K - K.T).max() < 1e-14

    def test_unit_square_stencil(self):
        m = M.rectangle_mesh(1, 1, pattern="diagonal")
        K = dense(A.assemble_stiffness_weighted(m, 1.0))
        np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-15)
        assert np.all(np.diag(K) > 0)

    def test_mass_total_is_weight_integral(self):
        m = M.rectangle_mesh(6, 6, ((0, 1), (0, 2)))
        w = 2.0 + m.nodes[:, 0] + 3.0 * m.nodes[:, 1]
        # a linear weight is integrated exactly: int (2 + x + 3z) over [0,1]x[0,2]
        assert A.assemble_mass_weighted(m, w).sum() == pytest.approx(11.0, rel=1e-13)
        lumped = A.assemble_mass_weighted(m, w, lumped=True)
        assert lumped.nnz == m.num_nodes or abs(lumped - sp.diags(lumped.diagonal())).max() == 0.0
        assert lumped.sum() == pytest.approx(11.0, rel=1e-13)

    def test_free_drainage_bottom_edge(self):
        m = M.rectangle_mesh(4, 2, ((0, 2), (0, 1)))
        Ks = 1.96
        b = A.assemble_boundary(m, "bottom", "free_drainage", Ks * np.ones(m.num_nodes))
        bottom = m.nodes_with_tag("bottom")
        x = m.nodes[bottom, 0]
        share = np.where((x == 0) | (x == 2), 0.25, 0.5)
        np.testing.assert_allclose(b[bottom], -Ks * share, rtol=1e-14)
        assert np.count_nonzero(b) == len(bottom)
        top = A.assemble_boundary(m, "top", "free_drainage", np.ones(m.num_nodes))
        assert top.sum() == pytest.approx(2.0)
        side = A.assemble_boundary(m, "left", "free_drainage", np.ones(m.num_nodes))
        np.testing.assert_allclose(side, 0.0, atol=1e-15)

    def test_neumann_edge_total(self):
        m = M.rectangle_mesh(5, 3, ((0, 1), (0, 1)), [("inlet", "top", (0.0, 0.6))])
        b = A.assemble_boundary(m, "inlet", "neumann", 2.0)
        assert b.sum() == pytest.approx(2.0 * 0.6)

    def test_unknown_tag(self):
        m = M.rectangle_mesh(2, 2)
        with pytest.raises(A.AssemblyError):
            A.assemble_boundary(m, "nowhere", "neumann", 1.0)
        with pytest.raises(A.AssemblyError):
            A.assemble_boundary(m, "top", "robin", 1.0)

    def test_source_linear_exact(self):
        m = M.rectangle_mesh(3, 3, ((0, 1), (0, 1)))
        f = A.assemble_source(m, lambda X: 1.0 + X[..., 0])
        assert f.sum() == pytest.approx(1.5, rel=1e-13)

    def test_quadrature_degree_five(self):
        lam, w = A.quadrature(2)
        # int over reference triangle of x^a y^b = a! b! / (a + b + 2)!
        for a, b in [(0, 0), (2, 3), (5, 0), (1, 4)]:
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            approx = 0.5 * np.sum(w * lam[:, 1] ** a * lam[:, 2] ** b)
            assert approx == pytest.approx(exact, rel=1e-12)


class TestSolve:
    def test_identity(self, rng):
        b = rng.normal(size=7)
        np.testing.assert_allclose(A.solve_linear(sp.identity(7, format="csr"), b), b)

    def test_zero_rhs(self):
        np.testing.assert_array_equal(A.solve_linear(sp.identity(3), np.zeros(3)), 0.0)

    def test_singular_neumann(self):
        m = M.rectangle_mesh(3, 3, pattern="diagonal")
        K = A.assemble_stiffness_weighted(m, 1.0)
        with pytest.raises(A.LinearSolveError):
            A.solve_linear(K, np.ones(m.num_nodes))

    def test_iterative_path(self, rng):
        m = M.rectangle_mesh(12, 12)
        K = A.assemble_stiffness_weighted(m, 1.0) + A.assemble_mass_weighted(m)
        b = rng.normal(size=m.num_nodes)
        x_direct = A.solve_linear(K, b)
        x_iter = A.solve_linear(K, b, direct_max=10)
        np.testing.assert_allclose(x_iter, x_direct, rtol=1e-8, atol=1e-10)
        assert np.linalg.norm(K @ x_iter - b) <= 1e-10 * np.linalg.norm(b)

    def test_apply_dirichlet_leaves_input(self):
        m = M.interval_mesh(4, 0, 1)
        K = A.assemble_stiffness_weighted(m, 1.0)
        before = K.toarray().copy()
        A.apply_dirichlet(K, np.zeros(5), [0], [1.0])
        np.testing.assert_array_equal(K.toarray(), before)


class TestL2:
    def test_interpolant(self):
        m = M.interval_mesh(16, 0.0, 1.0)
        f = lambda x: 2.0 - 3.0 * x  # noqa: E731
        assert A.l2_norm_error(m, f(m.nodes[:, 0]), f) <= 1e-14

    def test_unit(self):
        m = M.interval_mesh(5, 0.0, 1.0)
        assert A.l2_norm_error(m, np.zeros(6), lambda x: np.ones_like(x)) == pytest.approx(1.0, rel=1e-14)

    def test_sine_interpolation_error(self):
        # ||f - I_h f|| ~ h^2 ||f''|| / sqrt(120) for P1 on a uniform mesh
        n = 64
        m = M.interval_mesh(n, 0.0, 1.0)
        err = A.l2_norm_error(m, np.sin(np.pi * m.nodes[:, 0]), lambda x: np.sin(np.pi * x))
        predicted = (1.0 / n) ** 2 * np.pi**2 / math.sqrt(240.0)
        assert err == pytest.approx(predicted, rel=0.05)

    def test_two_dimensional(self):
        m = M.rectangle_mesh(4, 4)
        f = lambda X: X[..., 0] + 2 * X[..., 1]  # noqa: E731
        assert A.l2_norm_error(m, f(m.nodes), f) <= 1e-14


def _permuted(mesh, perm):
    return M.Mesh(mesh.nodes, mesh.elements[perm], mesh.facets, mesh.facet_tags)


@given(seed=st.integers(0, 2**32 - 1))
def test_assembly_order_independent(seed):
    rng = np.random.default_rng(seed)
    m = M.rectangle_mesh(4, 3, ((0, 1), (0, 1)))
    p = _permuted(m, rng.permutation(m.num_elements))
    D = rng.uniform(0.1, 2.0, m.num_nodes)
    for f in (A.assemble_stiffness_weighted, A.assemble_mass_weighted):
        assert abs(f(m, D) - f(p, D)).max() <= 1e-14
    np.testing.assert_allclose(A.assemble_gravity(m, D), A.assemble_gravity(p, D), atol=1e-14)


def test_assembly_deterministic():
    m = M.layered_split(10, 5).mesh_1
    D = np.linspace(0.1, 1.0, m.num_nodes)
    a = A.assemble_stiffness_weighted(m, D)
    b = A.assemble_stiffness_weighted(m, D)
    assert (a != b).nnz == 0
