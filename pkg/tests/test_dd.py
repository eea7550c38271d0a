import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urichards import constitutive as cm
from urichards import dd
from urichards import mesh as M
from urichards import schemes as sch
from urichards import transform as tr

SAND = cm.HydraulicModel(theta_s=0.41, theta_r=0.065, n=1.89, K_s=1.0, alpha=7.5)
CLAY = cm.HydraulicModel(theta_s=0.38, theta_r=0.068, n=1.09, K_s=0.048, alpha=0.8)
TOP = cm.HydraulicModel(theta_s=0.5, theta_r=0.12, alpha=0.028, n=3.0, K_s=0.25)
BOTTOM = cm.HydraulicModel(theta_s=0.46, theta_r=0.034, alpha=0.016, n=1.37, K_s=2.0)


class TestTransfer:
    def test_identity_same_soil(self, clay_loam):
        u = np.linspace(0.01, tr.u_max(clay_loam), 25)
        np.testing.assert_allclose(dd.interface_transfer(u, clay_loam, clay_loam), u, rtol=1e-9, atol=1e-12)

    def test_saturation_maps_to_u_max(self):
        out = dd.interface_transfer(np.array([tr.u_max(SAND)]), SAND, CLAY)
        assert out[0] == pytest.approx(tr.u_max(CLAY), rel=1e-12)

    def test_dry_maps_to_zero(self):
        assert dd.interface_transfer(np.array([0.0]), SAND, CLAY)[0] == 0.0

    @given(st.floats(0.05, 0.95))
    def test_roundtrip_and_equal_head(self, s):
        u1 = tr.u_from_S(SAND, s)
        u2 = dd.interface_transfer(np.array([u1]), SAND, CLAY)
        p1 = tr.pressure_from_u(SAND, np.array([u1]))[0]
        p2 = tr.pressure_from_u(CLAY, u2)[0]
        assert p2 == pytest.approx(p1, rel=1e-7)
        back = dd.interface_transfer(u2, CLAY, SAND)[0]
        assert back == pytest.approx(u1, rel=1e-6)

    def test_unbounded_rejected(self):
        bad = cm.HydraulicModel(family=cm.HAVERKAMP, alpha=1.0, beta=2.0, gamma=2.5, A=1.0, K_s=1.0)
        with pytest.raises(cm.UnsupportedModelError):
            dd.interface_transfer(np.array([0.5]), SAND, bad)


class TestPressureJump:
    def test_both_saturated(self):
        assert dd.interface_pressure_jump(SAND, [tr.u_max(SAND)], CLAY, [tr.u_max(CLAY)]) == 0.0

    def test_both_dry(self):
        assert dd.interface_pressure_jump(SAND, [0.0], CLAY, [0.0]) == 0.0

    def test_value(self):
        u1 = tr.u_from_pressure(SAND, np.array([-0.5]))
        u2 = tr.u_from_pressure(CLAY, np.array([-2.0]))
        assert dd.interface_pressure_jump(SAND, u1, CLAY, u2) == pytest.approx(1.5, rel=1e-8)

    def test_one_dry_is_infinite(self):
        assert dd.interface_pressure_jump(SAND, [0.0], CLAY, [0.5]) == np.inf


def test_coupling_config():
    with pytest.raises(ValueError):
        dd.CouplingConfig(lam=0.0)
    with pytest.raises(ValueError):
        dd.CouplingConfig(flux_recovery="mortar")


def _flat_pair(nx=6, ny=3):
    return M.layered_split(nx, ny, ((0.0, 1.0), (0.0, 1.0)), xi=lambda x: 0.5 + 0.0 * x, pattern="diagonal")


def test_single_soil_matches_merged_mesh(vg2):
    pair = _flat_pair()
    psi0 = lambda X: -0.2 - 0.5 * X[:, 1]  # noqa: E731
    bcs_top = {"top": {"type": "dirichlet", "S": 0.9}}
    bcs_bot = {"bottom": {"type": "neumann", "q": 0.0}}
    cfg = sch.SolverConfig(dt=0.05, t_end=0.2, newton_abs_tol=1e-12, newton_rel_tol=1e-12)
    coupled = dd.CoupledProblem(pair, (vg2, vg2), (bcs_top, bcs_bot), cfg, dd.CouplingConfig(lam=2.0, dd_tol=1e-11, dd_max_iter=300))
    s1, s2 = coupled.initial_states(
        sch.project_initial(pair.mesh_1, vg2, psi0=psi0), sch.project_initial(pair.mesh_2, vg2, psi0=psi0)
    )
    traj = dd.run_coupled(coupled, s1, s2)
    f1, f2 = traj.states[-1]

    merged = M.merge_pair(pair)
    p = sch.Problem(merged, vg2, {**bcs_top, **bcs_bot}, cfg)
    ref = sch.run_transient(p, p.initial_state(sch.project_initial(merged, vg2, psi0=psi0))).final.u
    n1 = pair.mesh_1.num_nodes
    np.testing.assert_allclose(f1.u, ref[:n1], atol=1e-8)
    rest = np.setdiff1d(np.arange(pair.mesh_2.num_nodes), pair.gamma_nodes_2)
    np.testing.assert_allclose(f2.u[rest], ref[n1:], atol=1e-8)
    assert traj.diagnostics[-1][3] < 1e-7


def test_layered_soils_converge_and_match_heads():
    pair = M.layered_split(10, 5)
    u1 = sch.project_initial(pair.mesh_1, TOP, psi0=lambda X: -X[:, 1])
    u2 = sch.project_initial(pair.mesh_2, BOTTOM, psi0=lambda X: -X[:, 1])
    bcs = ({"top": {"type": "dirichlet", "S": 1.0}}, {"bottom": {"type": "dirichlet", "S": 1.0}})
    cfg = sch.SolverConfig(dt=0.05, t_end=0.25)
    coupled = dd.CoupledProblem(pair, (TOP, BOTTOM), bcs, cfg, dd.CouplingConfig(dd_tol=1e-8, dd_max_iter=50))
    traj = dd.run_coupled(coupled, *coupled.initial_states(u1, u2), output_times=[0.1])
    assert len(traj.states) == 2
    assert traj.max_iterations() <= 50
    for t, its, change, jump, newton in traj.diagnostics:
        assert change <= 1e-8 and newton >= 2 and np.isfinite(jump)
    s1, s2 = traj.states[-1]
    assert all(np.all((s.S > -1e-6) & (s.S < 1 + 1e-9)) for s in (s1, s2))


def test_schwarz_cap_raises():
    pair = M.layered_split(6, 3)
    u1 = sch.project_initial(pair.mesh_1, SAND, S0=0.2)
    u2 = sch.project_initial(pair.mesh_2, CLAY, S0=0.9)
    cfg = sch.SolverConfig(dt=1.0, t_end=1.0)
    coupled = dd.CoupledProblem(pair, (SAND, CLAY), ({}, {}), cfg, dd.CouplingConfig(dd_tol=1e-14, dd_max_iter=1))
    with pytest.raises(dd.SchwarzError) as exc:
        dd.schwarz_timestep(coupled, *coupled.initial_states(u1, u2))
    assert len(exc.value.changes) == 1


def test_saturated_interface_has_no_jump():
    pair = M.layered_split(6, 3)
    u1 = np.full(pair.mesh_1.num_nodes, tr.u_max(SAND))
    u2 = np.full(pair.mesh_2.num_nodes, tr.u_max(CLAY))
    cfg = sch.SolverConfig(dt=0.1, t_end=0.1)
    bcs = ({"top": {"type": "dirichlet", "S": 1.0}}, {"bottom": {"type": "dirichlet", "S": 1.0}})
    coupled = dd.CoupledProblem(pair, (SAND, CLAY), bcs, cfg)
    s1, s2 = coupled.initial_states(u1, u2)
    assert coupled.pressure_jump(s1, s2) == 0.0
