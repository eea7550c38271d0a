"""Two-subdomain non-overlapping Schwarz iteration with Robin transmission.

Each subdomain ``i`` solves its Newton u-step with the interface condition

    F_i + lam * u_i = g_i        on the interface,

where ``F_i`` is the water flux *into* subdomain ``i`` (``-q . n_i``).
Continuity of flux (``F_1 + F_2 = 0``) and of pressure head gives the
updates ``g_1 = -F_2 + lam T_21(u_2)`` and ``g_2 = -F_1 + lam T_12(u_1)``,
where ``T`` carries ``u`` across through the pressure head. All interface
quantities are integrated nodal values on the interface facets.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import constitutive as cm
from . import transform as tr
from .mesh import INTERFACE
from .schemes import Problem, Robin, State, StepError

log = logging.getLogger(__name__)

DD_COLUMNS = ("time", "schwarz_iters", "max_trace_change", "pressure_jump")


class SchwarzError(RuntimeError):
    """Schwarz iterations failed to converge within the iteration cap."""

    def __init__(self, msg, t, changes):
        super().__init__(f"{msg} at t={t:.6g}; trace changes per iteration: " + ", ".join(f"{c:.3e}" for c in changes))
        self.t = t
        self.changes = list(changes)


@dataclass
class CouplingConfig:
    lam: float = 25.0
    dd_tol: float = 1e-3
    dd_max_iter: int = 10
    flux_recovery: str = "variational_residual"

    def __post_init__(self):
        if not self.lam > 0.0 or not self.dd_tol > 0.0 or self.dd_max_iter < 1:
            raise ValueError("need lam > 0, dd_tol > 0 and dd_max_iter >= 1")
        if self.flux_recovery != "variational_residual":
            raise ValueError(f"unsupported flux recovery {self.flux_recovery!r}")


def interface_transfer(u_other, model_from, model_to):
    """Map ``u`` of one soil to the ``u`` of the other with equal pressure head.

    ``u <= 0`` (completely dry) maps to 0 and is recorded as a clamp event;
    heads of ``-inf`` or too dry to resolve in the receiving soil likewise
    end at ``u = 0``.
    """
    for m in (model_from, model_to):
        ok, why = cm.check_boundedness(m)
        if not ok:
            raise cm.UnsupportedModelError(why)
    u_other = np.asarray(u_other, dtype=float)
    psi = tr.pressure_from_u(model_from, u_other)
    dry = ~np.isfinite(psi)
    if np.any(dry):
        cm.clamp_log.record(np.count_nonzero(dry), float(np.max(-np.minimum(u_other[dry], 0.0), initial=0.0)))
    return tr.u_from_pressure(model_to, psi)


def interface_pressure_jump(model_1, u_trace_1, model_2, u_trace_2):
    """``max |psi_1 - psi_2|`` over paired interface nodes."""
    p1 = tr.pressure_from_u(model_1, u_trace_1)
    p2 = tr.pressure_from_u(model_2, u_trace_2)
    both = np.isneginf(p1) & np.isneginf(p2)
    with np.errstate(invalid="ignore"):
        diff = np.where(both, 0.0, np.abs(p1 - p2))
    return float(np.max(diff, initial=0.0))


def recover_interface_flux(problem, state_old, state_new, robin=None):
    """Integrated inflow ``int F phi_i ds`` at every node from the variational residual.

    Evaluates the subdomain's own discrete operator (time derivative,
    frozen stiffness, gravity, boundary and source loads) on ``state_new``;
    on interface rows this is the flux the Robin term had to supply.
    """
    dt = state_new.t - state_old.t
    A, kr = problem.stiffness_u(state_old.S)
    b, _ = problem.loads(kr, state_new.t)
    asm = problem.asm
    return asm.matvec(problem.mass, state_new.S - state_old.S) / dt + asm.matvec(A, state_new.u) - b


@dataclass
class CoupledTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def mean_iterations(self):
        return float(np.mean([d[1] for d in self.diagnostics])) if self.diagnostics else 0.0

    def max_iterations(self):
        return max((d[1] for d in self.diagnostics), default=0)


class CoupledProblem:
    """Two :class:`Problem` instances glued along the interface of an :class:`InterfacePair`."""

    def __init__(self, pair, models, bcs, config, coupling=None, gravity=True):
        self.pair = pair
        self.coupling = coupling or CouplingConfig()
        self.config = config
        self.p = (
            Problem(pair.mesh_1, models[0], bcs[0], config, gravity=gravity),
            Problem(pair.mesh_2, models[1], bcs[1], config, gravity=gravity),
        )
        self.gamma = (pair.gamma_nodes_1, pair.gamma_nodes_2)
        lam = self.coupling.lam
        self.MG = tuple(p.asm.facet_mass(INTERFACE) for p in self.p)
        self.robin_matrix = tuple(lam * p.asm.facet_mass_data(INTERFACE) for p in self.p)
        self.g = None

    @property
    def models(self):
        return self.p[0].model, self.p[1].model

    def initial_states(self, u1, u2, t0=0.0):
        return self.p[0].initial_state(u1, t0), self.p[1].initial_state(u2, t0)

    def _transfer(self, src, u_src_full):
        """``lam * M_G(dst) T(u_src)`` on the receiving mesh, as a full nodal vector."""
        dst = 1 - src
        n_dst = self.p[dst].mesh.num_nodes
        trace = interface_transfer(u_src_full[self.gamma[src]], self.p[src].model, self.p[dst].model)
        full = np.zeros(n_dst)
        full[self.gamma[dst]] = trace
        return self.coupling.lam * (self.MG[dst] @ full)

    def _data_from(self, src, flux_src):
        """Robin data for the other side: ``-F_src + lam M_G T(u_src)`` mapped over."""
        dst = 1 - src
        g = np.zeros(self.p[dst].mesh.num_nodes)
        g[self.gamma[dst]] = -flux_src[self.gamma[src]]
        return g

    def traces(self, s1, s2):
        return s1.u[self.gamma[0]], s2.u[self.gamma[1]]

    def pressure_jump(self, s1, s2):
        t1, t2 = self.traces(s1, s2)
        return interface_pressure_jump(self.models[0], t1, self.models[1], t2)

    def step(self, s1, s2):
        """One time step of multiplicative Schwarz; returns ``(s1, s2, iters, change, newton)``."""
        cp = self.coupling
        p1, p2 = self.p
        g1_idx, g2_idx = self.gamma
        if self.g is None:
            self.g = self._transfer(1, s2.u)
        g1 = self.g
        prev1, prev2 = s1.u[g1_idx].copy(), s2.u[g2_idx].copy()
        w1, w2 = s1.u, s2.u
        changes = []
        newton = 0
        for it in range(1, cp.dd_max_iter + 1):
            try:
                n1, i1 = p1.step_newton_u(s1, Robin(self.robin_matrix[0], g1), guess=w1)
                F1 = i1.interior_residual
                g2 = self._data_from(0, F1) + self._transfer(0, n1.u)
                n2, i2 = p2.step_newton_u(s2, Robin(self.robin_matrix[1], g2), guess=w2)
            except StepError as exc:
                raise StepError(f"subdomain solve failed in Schwarz iteration {it}: {exc}") from exc
            newton += i1.iterations + i2.iterations
            F2 = i2.interior_residual
            g1 = self._data_from(1, F2) + self._transfer(1, n2.u)
            c1 = np.max(np.abs(n1.u[g1_idx] - prev1), initial=0.0)
            c2 = np.max(np.abs(n2.u[g2_idx] - prev2), initial=0.0)
            change = float(max(c1, c2))
            changes.append(change)
            prev1, prev2 = n1.u[g1_idx].copy(), n2.u[g2_idx].copy()
            w1, w2 = n1.u, n2.u
            if change <= cp.dd_tol:
                self.g = g1
                return n1, n2, it, change, newton
        raise SchwarzError("Schwarz iteration did not converge", s1.t + self.config.dt, changes)


def schwarz_timestep(coupled, s1, s2):
    """Advance both subdomains by one step; returns ``((s1, s2), iterations)``."""
    n1, n2, it, _, _ = coupled.step(s1, s2)
    return (n1, n2), it


def run_coupled(coupled, s1, s2, output_times=None, on_step=None):
    """March a :class:`CoupledProblem` to ``t_end``; diagnostics per step."""
    cfg = coupled.config
    n = cfg.n_steps
    keep = {n}
    if output_times is not None:
        keep |= {int(round(t / cfg.dt)) for t in output_times}
    traj = CoupledTrajectory()
    t0 = s1.t
    if 0 in keep:
        traj.times.append(t0)
        traj.states.append((s1, s2))
    for k in range(1, n + 1):
        s1, s2, it, change, newton = coupled.step(s1, s2)
        s1.t = s2.t = t0 + k * cfg.dt
        jump = coupled.pressure_jump(s1, s2)
        traj.diagnostics.append((s1.t, it, change, jump, newton))
        if on_step is not None:
            on_step(s1, s2, it)
        if k in keep:
            traj.times.append(s1.t)
            traj.states.append((s1, s2))
    return traj
