import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urichards import constitutive as cm
from urichards import kernels
from urichards import transform as tr

from .conftest import model_zoo

mp.mp.dps = 40


def beta_oracle(w, p, q):
    # t = s^p removes the singularity at s = 0; splitting at the midpoint helps near s = 1
    w, p, q = mp.mpf(w), mp.mpf(p), mp.mpf(q)
    f = lambda t: (1 - t ** (1 / p)) ** (q - 1) / p  # noqa: E731
    return float(mp.quad(f, [0, (w / 2) ** p, w**p]))


def u_oracle(S, b, c):
    return float(mp.quad(lambda s: (1 - s**c) ** (-b), [0, S]))


class TestIncompleteBeta:
    def test_unit_integrand(self):
        w = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(tr.incomplete_beta(w, 1.0, 1.0), w, atol=1e-15)

    def test_complete_half_half(self):
        assert tr.incomplete_beta(1.0, 0.5, 0.5) == pytest.approx(math.pi, rel=1e-14)

    def test_quadrature_oracle(self):
        assert tr.incomplete_beta(0.3, 2.0, 3.0) == pytest.approx(beta_oracle(0.3, 2, 3), rel=1e-12, abs=0)

    @pytest.mark.parametrize("w,p,q", [(0.01, 0.5, 0.7), (0.5, 4.2, 0.763), (0.97, 0.237, 0.763), (0.999, 3.0, 0.5), (0.2, 10.0, 2.0)])
    def test_quadrature_oracle_grid(self, w, p, q):
        assert tr.incomplete_beta(w, p, q) == pytest.approx(beta_oracle(w, p, q), rel=1e-12, abs=1e-300)

    def test_complement_consistency(self):
        for w, p, q in [(0.3, 2.0, 3.0), (0.8, 0.5, 0.7), (0.6, 4.2, 0.76)]:
            rest = beta_oracle(1.0, p, q) - beta_oracle(w, p, q)
            total = tr.incomplete_beta(1.0, p, q)
            assert tr.incomplete_beta(w, p, q) + rest == pytest.approx(total, abs=1e-11)

    @pytest.mark.parametrize("w,p,q", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, 0.0, 1.0), (0.5, 1.0, -1.0), (np.nan, 1, 1)])
    def test_domain(self, w, p, q):
        with pytest.raises(tr.TransformDomainError):
            tr.incomplete_beta(w, p, q)


class TestTransform:
    def test_gardner_identity(self):
        g = cm.HydraulicModel(family=cm.GARDNER, alpha=1.0)
        assert tr.u_from_S(g, 0.3) == 0.3
        bc = cm.HydraulicModel(family=cm.BROOKS_COREY, alpha=1.0, lambda_bc=2.0, B=3.0)
        S = np.linspace(0, 1, 7)
        np.testing.assert_array_equal(tr.u_from_S(bc, S), S)

    def test_haverkamp(self):
        h = cm.HydraulicModel(family=cm.HAVERKAMP, alpha=1.0, beta=2.0, gamma=3.0, A=1.0)
        assert tr.u_from_S(h, 0.75) == pytest.approx(1.0, rel=1e-14)

    def test_vg_umax(self, vg2):
        assert tr.u_max(vg2) == pytest.approx(math.pi / 2, rel=1e-14)
        assert tr.u_from_S(vg2, 1.0) == pytest.approx(math.pi / 2, rel=1e-14)
        assert tr.S_from_u(vg2, math.pi / 2) == pytest.approx(1.0, abs=1e-12)

    def test_vg_against_quadrature(self, clay_loam):
        C, a, b, c = clay_loam.jprime_constants
        for S in (0.1, 0.5, 0.9, 0.999):
            assert tr.u_from_S(clay_loam, S) == pytest.approx(u_oracle(S, b, c), rel=1e-12)

    def test_zero(self, clay_loam):
        assert tr.u_from_S(clay_loam, 0.0) == 0.0
        assert tr.S_from_u(clay_loam, 0.0) == 0.0

    def test_dS_du_endpoints(self, clay_loam):
        assert tr.dS_du(clay_loam, 0.0) == 1.0
        assert tr.dS_du(clay_loam, tr.u_max(clay_loam)) == pytest.approx(0.0, abs=1e-12)

    def test_domain(self, clay_loam):
        with pytest.raises(tr.TransformDomainError):
            tr.u_from_S(clay_loam, 1.01)
        with pytest.raises(tr.TransformDomainError):
            tr.S_from_u(clay_loam, tr.u_max(clay_loam) + 1e-6)
        with pytest.raises(tr.TransformDomainError):
            tr.S_from_u(clay_loam, -1e-6)
        # inside the clamp band
        assert tr.S_from_u(clay_loam, -1e-11) == 0.0

    def test_extended_map(self, clay_loam):
        um = tr.u_max(clay_loam)
        u = np.array([-0.2, um + 0.3])
        np.testing.assert_allclose(tr.S_from_u(clay_loam, u, extend=True), [-0.2, 1.0])
        np.testing.assert_allclose(tr.dS_du(clay_loam, u, extend=True), [1.0, 0.0])

    def test_pressure_roundtrip(self, clay_loam):
        um = tr.u_max(clay_loam)
        u = np.array([1e-3, 0.3 * um, 0.9 * um, um, um + 0.5])
        psi = tr.pressure_from_u(clay_loam, u)
        assert psi[3] == 0.0 and psi[4] > 0.0 and np.all(psi[:3] < 0.0)
        np.testing.assert_allclose(tr.u_from_pressure(clay_loam, psi), u, rtol=1e-9)
        assert tr.pressure_from_u(clay_loam, 0.0) == -np.inf
        assert tr.u_from_pressure(clay_loam, -np.inf) == 0.0

    def test_pressure_matches_constitutive(self, clay_loam):
        S = np.array([0.2, 0.6, 0.95])
        psi = tr.pressure_from_u(clay_loam, tr.u_from_S(clay_loam, S))
        np.testing.assert_allclose(psi, cm.pressure_from_saturation(clay_loam, S), rtol=1e-9)


GRID = np.linspace(0.0, 1.0, 10001)


@pytest.mark.parametrize("model", model_zoo(), ids=lambda m: f"{m.family}-{m.kr_kind}")
class TestTransformInvariants:
    def test_bounded_monotone(self, model):
        u = tr.u_from_S(model, GRID)
        assert u[0] == 0.0 and np.all(np.diff(u) > 0.0)
        assert u[-1] <= tr.u_max(model) * (1 + 1e-14)

    def test_inverse_monotone_roundtrip(self, model):
        u = np.linspace(0.0, tr.u_max(model), 10001)
        S = tr.S_from_u(model, u)
        assert np.all(np.diff(S) >= 0.0)
        # where 1 - S drops below double resolution, u cannot be recovered from S
        ok = 1.0 - S > 1e-10
        assert np.all(np.diff(S[ok]) > 0.0)
        np.testing.assert_allclose(tr.u_from_S(model, S[ok]), u[ok], atol=1e-12)

    def test_dS_du_finite_differences(self, model):
        # differentiate the forward map du/dS with a 4th-order stencil scaled to the distance from 0 and 1
        u = np.linspace(0.02, 0.98, 97) * tr.u_max(model)
        S = tr.S_from_u(model, u)
        h = 1e-3 * np.minimum(S, 1.0 - S)
        f = lambda x: tr.u_from_S(model, x)  # noqa: E731
        du_dS = (8 * (f(S + h) - f(S - h)) - (f(S + 2 * h) - f(S - 2 * h))) / (12 * h)
        np.testing.assert_allclose(tr.dS_du(model, u), 1.0 / du_dS, rtol=1e-6)


@pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled kernels not built")
class TestBackendParity:
    def setup_method(self):
        self.c = kernels.get_backend("compiled")
        self.p = kernels.get_backend("python")

    def test_incomplete_beta(self, rng):
        w = rng.uniform(0, 1, 500)
        for p, q in [(4.2, 0.76), (0.5, 0.5), (2.0, 3.0)]:
            np.testing.assert_allclose(self.c.incomplete_beta(w, p, q), self.p.incomplete_beta(w, p, q), rtol=1e-13, atol=1e-15)

    def test_transform_pair(self, clay_loam, rng):
        C, a, b, c = clay_loam.jprime_constants
        S = np.sort(rng.uniform(0, 1, 500))
        np.testing.assert_allclose(self.c.u_from_s(S, b, c), self.p.u_from_s(S, b, c), rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(self.c.dsdu_from_s(S, b, c), self.p.dsdu_from_s(S, b, c), rtol=1e-13, atol=1e-15)
        tab = tr.table_for(clay_loam)
        u = tab._forward(S)
        Sc, _ = self.c.s_from_u(u, b, c, tab.grid_S, tab.grid_u, 1e-13, None)
        Sp, _ = self.p.s_from_u(u, b, c, tab.grid_S, tab.grid_u, 1e-13, None)
        np.testing.assert_allclose(Sc, Sp, atol=1e-11)
        np.testing.assert_allclose(Sc, S, atol=1e-11)


def test_selected_backend_is_reported():
    assert kernels.BACKEND in ("compiled", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@given(S=st.floats(0.0, 1.0), n=st.floats(1.05, 5.0))
def test_roundtrip_property(S, n):
    m = cm.HydraulicModel(n=n, alpha=1.0)
    u = tr.u_from_S(m, S)
    assert 0.0 <= u <= tr.u_max(m) * (1 + 1e-14)
    assert tr.S_from_u(m, u) == pytest.approx(S, abs=1e-9)


@given(u=st.floats(0.0, 1.0), n=st.floats(1.05, 5.0))
def test_dsdu_in_unit_interval(u, n):
    m = cm.HydraulicModel(n=n, alpha=1.0)
    d = tr.dS_du(m, u * tr.u_max(m))
    assert 0.0 <= d <= 1.0
