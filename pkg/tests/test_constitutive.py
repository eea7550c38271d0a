import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urichards import constitutive as cm

from .conftest import model_zoo

ZOO = model_zoo()


def vg(n, alpha=1.0, **kw):
    return cm.HydraulicModel(n=n, alpha=alpha, K_s=1.0, **kw)


class TestPointValues:
    def test_zero_head_is_saturated(self, clay_loam):
        assert cm.saturation_from_pressure(clay_loam, 0.0) == 1.0

    def test_vg_half_saturation(self):
        # (1 + 3)^(-1/2) = 1/2
        assert cm.saturation_from_pressure(vg(2.0), -math.sqrt(3.0)) == pytest.approx(0.5, rel=1e-14)

    def test_gardner_dry_limit(self):
        g = cm.HydraulicModel(family=cm.GARDNER, alpha=1.0)
        assert cm.saturation_from_pressure(g, -1e4) == 0.0

    def test_positive_head_saturated(self, clay_loam):
        np.testing.assert_array_equal(cm.saturation_from_pressure(clay_loam, [0.5, 10.0]), [1.0, 1.0])

    def test_pressure_at_full_saturation(self, clay_loam):
        assert cm.pressure_from_saturation(clay_loam, 1.0) == 0.0

    def test_pressure_vg_half(self):
        assert cm.pressure_from_saturation(vg(2.0), 0.5) == pytest.approx(-math.sqrt(3.0), rel=1e-14)

    def test_pressure_diverges_at_zero(self, clay_loam):
        with pytest.raises(cm.PressureDivergenceError):
            cm.pressure_from_saturation(clay_loam, 0.0)

    @pytest.mark.parametrize("S", [-0.1, 1.2, np.nan])
    def test_saturation_domain(self, clay_loam, S):
        with pytest.raises(cm.SaturationDomainError):
            cm.relative_permeability(clay_loam, S)

    def test_kr_endpoints(self):
        m = vg(2.0)
        assert cm.relative_permeability(m, 1.0) == pytest.approx(1.0)
        assert cm.relative_permeability(m, 0.0) == 0.0

    def test_kr_power_law(self):
        m = vg(4.0, kr_variant=cm.POWER_LAW, B=4.6)
        assert cm.relative_permeability(m, 0.5) == pytest.approx(0.5**4.6, rel=1e-14)
        assert cm.relative_permeability(m, 0.5) == pytest.approx(0.0412, abs=5e-5)

    def test_jprime_gardner(self):
        g = cm.HydraulicModel(family=cm.GARDNER, alpha=1.0)
        assert cm.leverett_J_prime(g, 0.5) == pytest.approx(2.0)

    def test_jprime_vg_n2(self):
        assert cm.leverett_J_prime(vg(2.0), 0.5) == pytest.approx(4.0 / math.sqrt(0.75), rel=1e-14)

    def test_jprime_haverkamp(self):
        h = cm.HydraulicModel(family=cm.HAVERKAMP, alpha=1.0, beta=2.0, gamma=3.0, A=1.0)
        assert cm.leverett_J_prime(h, 0.5) == pytest.approx(2.0, rel=1e-14)

    @pytest.mark.parametrize("S", [0.0, 1.0])
    def test_jprime_singular(self, clay_loam, S):
        with pytest.raises(cm.SingularityError):
            cm.leverett_J_prime(clay_loam, S)

    def test_mobility_limits(self):
        m = vg(2.0)
        assert cm.mobility_coefficient(m, 0.0) == 0.0
        assert cm.mobility_coefficient(m, 1.0) == pytest.approx(1.0)
        g = cm.HydraulicModel(family=cm.GARDNER, alpha=1.0)
        assert cm.mobility_coefficient(g, 0.5) == pytest.approx(1.0)

    def test_mobility_small_S_series(self):
        # Kr S^(-1/m) ~ m^2 S^(1/2 + 1/m) as S -> 0
        m = vg(2.0)
        S = np.array([1e-8, 1e-6, 1e-4])
        ratio = cm.mobility_coefficient(m, S) / (0.25 * S ** 2.5)
        np.testing.assert_allclose(ratio, 1.0, rtol=2e-2)


class TestParameters:
    def test_constants_per_family(self):
        assert cm.HydraulicModel(family=cm.GARDNER, alpha=1.0).jprime_constants == (1.0, 1.0, 0.0, 1.0)
        bc = cm.HydraulicModel(family=cm.BROOKS_COREY, alpha=1.0, lambda_bc=2.0, B=3.0)
        assert bc.jprime_constants == (0.5, 1.5, 0.0, 1.0)
        hv = cm.HydraulicModel(family=cm.HAVERKAMP, alpha=1.0, beta=4.0, gamma=5.0, A=1.0)
        assert hv.jprime_constants == (0.25, 1.25, 0.75, 1.0)
        C, a, b, c = vg(2.0).jprime_constants
        assert (C, a, b, c) == pytest.approx((1.0, 2.0, 0.5, 2.0))

    def test_alpha_hcap_reciprocal(self):
        assert vg(2.0, alpha=0.015).h_cap == pytest.approx(1.0 / 0.015)
        with pytest.raises(cm.ParameterError):
            cm.HydraulicModel(n=2.0, alpha=2.0, h_cap=2.0)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(n=1.0, alpha=1.0),
            dict(n=2.0),
            dict(n=2.0, alpha=1.0, theta_r=0.5, theta_s=0.4),
            dict(n=2.0, alpha=1.0, K_s=0.0),
            dict(family="clay", alpha=1.0),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(cm.ParameterError):
            cm.HydraulicModel(**kw)

    def test_boundedness(self, clay_loam):
        assert cm.check_boundedness(clay_loam)[0]
        hv = cm.HydraulicModel(family=cm.HAVERKAMP, alpha=1.0, beta=2.0, gamma=2.0, A=1.0)
        ok, why = cm.check_boundedness(hv)
        assert not ok and "gamma" in why
        assert cm.check_boundedness(vg(2.0, kr_variant=cm.POWER_LAW, B=4.6))[0]
        assert not cm.check_boundedness(vg(2.0, kr_variant=cm.POWER_LAW, B=1.5))[0]
        with pytest.raises(cm.UnsupportedModelError):
            cm.mobility_coefficient(hv, 0.5)

    def test_dict_roundtrip(self):
        m = cm.HydraulicModel.from_dict(
            {"kr": "power_law", "theta_s": 0.95, "theta_r": 0.0, "n": 4, "K_s": 0.01, "h_cap": 342, "B": 4.6, "rho": 8.41e-4, "g": 9.8e3, "units": {"K_s": "mm"}}
        )
        assert m.gravity_scale == pytest.approx(8.2418)
        assert cm.HydraulicModel.from_dict(m.to_dict()) == m
        with pytest.raises(cm.ParameterError):
            cm.HydraulicModel.from_dict({"n": 2.0, "alpha": 1.0, "porosity": 0.3})


class TestClamp:
    def test_small_violation_clamped_and_logged(self):
        before = cm.clamp_log.count
        out = cm.clamp_saturation(np.array([-1e-10, 0.5, 1.0 + 1e-10]))
        np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])
        assert cm.clamp_log.count == before + 2

    def test_large_violation_raises(self):
        with pytest.raises(cm.SaturationDomainError):
            cm.clamp_saturation(np.array([1.1]))


GRID = np.linspace(0.0, 1.0, 10001)


@pytest.mark.parametrize("model", ZOO, ids=lambda m: f"{m.family}-{m.kr_kind}")
class TestInvariants:
    def test_monotone_saturation(self, model):
        psi = -np.geomspace(1e-6, 1e6, 10000)[::-1] * model.h_cap
        S = cm.saturation_from_pressure(model, psi)
        assert np.all(np.diff(S) >= 0.0)

    def test_monotone_kr(self, model):
        assert np.all(np.diff(cm.relative_permeability(model, GRID)) >= -1e-15)

    def test_strictly_increasing_J(self, model):
        assert np.all(np.diff(cm.leverett_J(model, GRID[1:])) > 0.0)

    def test_inverse_pair(self, model):
        S = np.concatenate([np.geomspace(1e-6, 0.5, 2000), np.linspace(0.5, 1.0, 2000)])
        back = cm.saturation_from_pressure(model, cm.pressure_from_saturation(model, S))
        np.testing.assert_allclose(back, S, rtol=0, atol=1e-10)

    def test_jprime_matches_finite_differences(self, model):
        S = np.linspace(0.05, 0.95, 181)
        h = 1e-6
        fd = (cm.leverett_J(model, S + h) - cm.leverett_J(model, S - h)) / (2 * h)
        np.testing.assert_allclose(fd, cm.leverett_J_prime(model, S), rtol=1e-6)

    def test_fused_mobility(self, model):
        mob = cm.mobility_coefficient(model, GRID)
        assert np.all(np.isfinite(mob)) and mob.max() < 1e6
        S = np.linspace(1e-3, 1.0, 2000)
        a = model.jprime_constants[1]
        np.testing.assert_allclose(mob[-1], cm.relative_permeability(model, 1.0), rtol=1e-12)
        np.testing.assert_allclose(cm.mobility_coefficient(model, S), cm.relative_permeability(model, S) * S ** (-a), rtol=1e-12)


@given(S=st.floats(1e-6, 1.0), n=st.floats(1.05, 6.0), alpha=st.floats(1e-3, 10.0))
def test_vg_inverse_property(S, n, alpha):
    m = vg(n, alpha)
    psi = cm.pressure_from_saturation(m, S)
    assert psi <= 0.0
    assert cm.saturation_from_pressure(m, psi) == pytest.approx(S, abs=1e-10)


@given(S=st.floats(0.0, 1.0), n=st.floats(1.05, 6.0))
def test_vg_kr_unit_interval(S, n):
    kr = cm.relative_permeability(vg(n), S)
    assert 0.0 <= kr <= 1.0 + 1e-15
    assert 0.0 <= cm.mobility_coefficient(vg(n), S) <= 1.0 + 1e-12
