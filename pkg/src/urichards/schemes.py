"""Backward-Euler time stepping with coefficients frozen at the previous level.

Four schemes share one :class:`Problem`:

``linear_u``
    one linear solve per step, mass weighted by ``phi dS/du(u^n)``.
``newton_u``
    Newton iterations on ``phi (S(u) - S^n) / dt``, stiffness and gravity frozen.
``semi_implicit_s``
    the saturation form with coefficient ``K_s Kr(S^n) h_cap J'(S^n)``.
``regularized_s``
    the same with ``J'`` capped at ``J'(1 - delta)``.

All u-schemes use the extended inverse map: ``S = u`` below zero, ``S = 1``
above ``u_max``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import constitutive as cm
from . import transform as tr
from .assembly import DIRECT_MAX, get_assembler

log = logging.getLogger(__name__)

LINEAR_U = "linear_u"
NEWTON_U = "newton_u"
SEMI_IMPLICIT_S = "semi_implicit_s"
REGULARIZED_S = "regularized_s"
SCHEMES = (LINEAR_U, NEWTON_U, SEMI_IMPLICIT_S, REGULARIZED_S)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
FREE_DRAINAGE = "free_drainage"


class ConfigError(ValueError):
    """Inconsistent solver or boundary configuration."""


class CoefficientError(ArithmeticError):
    """A scheme coefficient is not finite."""


class StepError(RuntimeError):
    """A time step failed; ``diagnostics`` holds what is known about it."""

    def __init__(self, msg, **diagnostics):
        detail = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(f"{msg} ({detail})" if detail else msg)
        self.diagnostics = diagnostics


@dataclass
class SolverConfig:
    dt: float
    t_end: float
    scheme: str = NEWTON_U
    newton_abs_tol: float = 1e-8
    newton_rel_tol: float = 1e-8
    newton_max_iter: int = 100
    delta: Optional[float] = None
    lumped: bool = False
    coefficient_rule: str = "nodal"
    direct_max: int = DIRECT_MAX

    def __post_init__(self):
        if not self.dt > 0.0 or not self.t_end > 0.0:
            raise ConfigError("dt and t_end must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (self.newton_abs_tol > 0.0 and self.newton_rel_tol > 0.0 and self.newton_max_iter >= 1):
            raise ConfigError("Newton tolerances must be positive")
        if self.scheme == REGULARIZED_S and not (self.delta is not None and 0.0 < self.delta < 0.5):
            raise ConfigError("regularized_s needs delta in (0, 0.5)")
        if self.coefficient_rule not in ("nodal", "gauss"):
            raise ConfigError("coefficient_rule must be 'nodal' or 'gauss'")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ConfigError("t_end must be a whole number of time steps")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


Value = Union[float, Callable]


@dataclass
class BoundaryCondition:
    """One boundary tag's condition.

    ``value`` is a number or ``f(coords, t)`` with ``coords`` of shape
    ``(k, d)``. Dirichlet data name their ``variable`` (``S``, ``u``,
    ``theta`` or ``psi``); Neumann data give the outward flux ``q . n``.
    """

    kind: str
    value: Value = 0.0
    variable: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (DIRICHLET, NEUMANN, FREE_DRAINAGE):
            raise ConfigError(f"unknown boundary kind {self.kind!r}")
        if self.kind == DIRICHLET and self.variable not in ("S", "u", "theta", "psi"):
            raise ConfigError("Dirichlet data must name S, u, theta or psi")

    def evaluate(self, coords, t):
        if callable(self.value):
            return np.broadcast_to(np.asarray(self.value(coords, t), dtype=float), (len(coords),)).copy()
        return np.full(len(coords), float(self.value))

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        kind = spec.pop("type")
        spec.pop("units", None)
        if kind == DIRICHLET:
            if len(spec) != 1:
                raise ConfigError("Dirichlet condition needs exactly one of S, u, theta, psi")
            (var, val), = spec.items()
            return cls(kind, float(val), var)
        if kind == NEUMANN:
            return cls(kind, float(spec.get("q", 0.0)))
        return cls(kind)


def _check_bounds(model, variable, vals):
    eps = 1e-12
    if variable == "S" and (np.any(vals < -eps) or np.any(vals > 1 + eps)):
        raise ConfigError("Dirichlet S outside [0, 1]")
    if variable == "theta" and (np.any(vals < model.theta_r - eps) or np.any(vals > model.theta_s + eps)):
        raise ConfigError("Dirichlet theta outside [theta_r, theta_s]")
    if variable == "u" and (np.any(vals < -eps) or np.any(vals > tr.u_max(model) + 1e-10)):
        raise ConfigError("Dirichlet u outside [0, u_max]")


def to_saturation(model, variable, vals):
    vals = np.asarray(vals, dtype=float)
    if variable == "S":
        return np.clip(vals, 0.0, 1.0)
    if variable == "theta":
        return np.clip(cm.saturation_from_theta(model, vals), 0.0, 1.0)
    if variable == "psi":
        return cm.saturation_from_pressure(model, vals)
    return tr.S_from_u(model, vals, extend=True)


def to_u(model, variable, vals):
    vals = np.asarray(vals, dtype=float)
    if variable == "u":
        return vals
    if variable == "psi":
        return tr.u_from_pressure(model, vals)
    return tr.u_from_S(model, to_saturation(model, variable, vals))


class BoundaryData(dict):
    """Mapping ``tag -> BoundaryCondition``."""

    @classmethod
    def from_dict(cls, spec):
        return cls({tag: c if isinstance(c, BoundaryCondition) else BoundaryCondition.from_dict(c) for tag, c in spec.items()})


@dataclass
class State:
    t: float
    u: np.ndarray
    S: np.ndarray


def _field(spec, coords):
    if callable(spec):
        return np.asarray(spec(coords), dtype=float) * np.ones(len(coords))
    return np.full(len(coords), float(spec))


def project_initial(mesh, model, S0=None, u0=None, psi0=None, theta0=None):
    """Nodal interpolation of initial data given as S, u, psi or theta.

    Each argument is a number or a function of the ``(N, d)`` node array.
    Returns the nodal ``u`` vector.
    """
    given = [(k, v) for k, v in (("S", S0), ("u", u0), ("psi", psi0), ("theta", theta0)) if v is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of S0, u0, psi0, theta0")
    var, spec = given[0]
    vals = _field(spec, mesh.nodes)
    if var == "psi":
        if np.isnan(vals).any():
            raise ConfigError("initial pressure head is NaN")
        return tr.u_from_pressure(model, np.minimum(vals, 0.0))
    _check_bounds(model, var, vals)
    return to_u(model, var, vals)


def regularized_J_prime(model, S, delta):
    """``J'`` evaluated at ``S`` clipped into ``[delta, 1 - delta]``."""
    if not delta > 0.0:
        raise ConfigError("delta must be positive")
    S = np.clip(np.asarray(S, dtype=float), delta, 1.0 - delta)
    return cm.leverett_J_prime(model, S)


@dataclass
class Robin:
    """Extra pattern-data matrix and right-hand side for a Robin interface."""

    matrix: np.ndarray
    rhs: np.ndarray


@dataclass
class StepInfo:
    iterations: int = 0
    mass_balance: float = 0.0
    residual: float = 0.0
    interior_residual: Optional[np.ndarray] = None


class Problem:
    """Single-domain discrete problem on one mesh with one soil model."""

    def __init__(self, mesh, model, bcs, config, source=None, gravity=True):
        ok, why = cm.check_boundedness(model)
        if not ok:
            raise cm.UnsupportedModelError(why)
        self.mesh = mesh
        self.model = model
        self.bcs = BoundaryData.from_dict(bcs) if not isinstance(bcs, BoundaryData) else bcs
        self.config = config
        self.source = source
        self.asm = get_assembler(mesh)
        C, a, b, c = model.jprime_constants
        self.b_exp, self.c_exp = b, c
        self.diff_scale = model.K_s * model.h_cap * C
        self.grav_scale = model.K_s * model.gravity_scale if gravity else 0.0
        self.phi = model.phi
        self.mass = self.phi * self.asm.mass_data(None, config.lumped)
        known = set(mesh.tags())
        for tag in self.bcs:
            if tag not in known:
                raise ConfigError(f"boundary condition for unknown tag {tag!r}; mesh has {sorted(known)}")
        self._dir = []
        for tag, bc in self.bcs.items():
            if bc.kind == DIRICHLET:
                nodes = mesh.nodes_with_tag(tag)
                self._dir.append((nodes, bc))
        allnodes = [n for n, _ in self._dir]
        self.dirichlet_nodes = np.unique(np.concatenate(allnodes)) if allnodes else np.zeros(0, dtype=np.int64)
        self.free = np.ones(mesh.num_nodes, dtype=bool)
        self.free[self.dirichlet_nodes] = False
        self.ones = np.ones(mesh.num_nodes)

    # boundary data ------------------------------------------------------
    def _dirichlet(self, t, as_u):
        out = np.empty(self.mesh.num_nodes)
        for nodes, bc in self._dir:
            vals = bc.evaluate(self.mesh.nodes[nodes], t)
            _check_bounds(self.model, bc.variable, vals)
            out[nodes] = to_u(self.model, bc.variable, vals) if as_u else to_saturation(self.model, bc.variable, vals)
        return self.dirichlet_nodes, out[self.dirichlet_nodes]

    def dirichlet_u(self, t):
        return self._dirichlet(t, True)

    def dirichlet_S(self, t):
        return self._dirichlet(t, False)

    # frozen coefficients ------------------------------------------------
    def nodal_coefficients(self, S):
        Sc = np.clip(S, 0.0, 1.0)
        D = self.diff_scale * cm.mobility_coefficient(self.model, Sc)
        kr = cm.relative_permeability(self.model, Sc)
        return D, kr

    def stiffness_u(self, S):
        """Frozen stiffness data and nodal Kr for the u-schemes."""
        D, kr = self.nodal_coefficients(S)
        if self.config.coefficient_rule == "nodal":
            return self.asm.stiffness_data(D), kr
        coef = self.asm.element_quadrature_values(
            np.clip(S, 0.0, 1.0), lambda s: self.diff_scale * cm.mobility_coefficient(self.model, s)
        )
        return self.asm.stiffness_element_data(coef), kr

    def loads(self, kr, t_new):
        """Right-hand side terms: gravity, boundary fluxes and source.

        Returns ``(total, boundary_part)``; the boundary part is the net
        inflow through Neumann and free-drainage facets.
        """
        asm = self.asm
        gk = self.grav_scale * kr
        b = -asm.gravity(gk)
        bnd = np.zeros(self.mesh.num_nodes)
        for tag, bc in self.bcs.items():
            if bc.kind == FREE_DRAINAGE:
                # the outward flux there is q.n = -K_s Kr e_z.n
                bnd += asm.boundary(tag, "free_drainage", gk)
            elif bc.kind == NEUMANN:
                nodes = self.mesh.nodes_with_tag(tag)
                q = np.zeros(self.mesh.num_nodes)
                q[nodes] = bc.evaluate(self.mesh.nodes[nodes], t_new)
                bnd -= asm.boundary(tag, "neumann", q)
        b += bnd
        if self.source is not None:
            b += asm.source(lambda x: self.source(x, t_new), npts=3)
        return b, bnd

    def total_mass(self, S):
        return float(self.asm.matvec(self.mass, S).sum())

    def _balance(self, S_old, S_new, A, x, b, dt):
        """Mass change minus net inflow (Dirichlet reactions included), relative."""
        asm = self.asm
        dm = asm.matvec(self.mass, S_new - S_old)
        R = dm / dt + asm.matvec(A, x) - b
        inflow = float(b.sum() - asm.matvec(A, x).sum() + R[~self.free].sum())
        resid = float(dm.sum()) - dt * inflow
        scale = max(abs(self.total_mass(S_new)), abs(self.total_mass(S_old)), 1e-300)
        return resid / scale

    # schemes -------------------------------------------------------------
    def initial_state(self, u0, t0=0.0):
        u0 = np.asarray(u0, dtype=float).copy()
        nodes, vals = self.dirichlet_u(t0)
        if nodes.size:
            u0[nodes] = vals
        return State(t0, u0, tr.S_from_u(self.model, u0, extend=True))

    def step(self, state, robin=None):
        scheme = self.config.scheme
        if scheme == LINEAR_U:
            return self.step_linear_u(state, robin)
        if scheme == NEWTON_U:
            return self.step_newton_u(state, robin)
        return self.step_S(state, robin)

    def step_linear_u(self, state, robin=None):
        cfg, asm = self.config, self.asm
        dt = cfg.dt
        t1 = state.t + dt
        A, kr = self.stiffness_u(state.S)
        b, _ = self.loads(kr, t1)
        if robin is not None:
            A = A + robin.matrix
            b = b + robin.rhs
        w = self.phi * tr.dS_du_from_S(self.model, state.S, state.u)
        Mw = asm.mass_data(w, cfg.lumped)
        lhs = Mw / dt + A
        rhs = asm.matvec(Mw, state.u) / dt + b
        nodes, vals = self.dirichlet_u(t1)
        lhs, rhs = asm.dirichlet_data(lhs, rhs, nodes, vals)
        u = asm.solve(lhs, rhs, direct_max=cfg.direct_max)
        if not np.all(np.isfinite(u)):
            raise StepError("non-finite solution", t=t1)
        S = tr.S_from_u(self.model, u, extend=True, guess=np.clip(state.S, 0.0, 1.0))
        info = StepInfo(1, self._balance(state.S, S, A, u, b, dt))
        return State(t1, u, S), info

    def residual(self, u, S, S_old, A, b, dt):
        r = self.asm.matvec(self.mass, S - S_old) / dt + self.asm.matvec(A, u) - b
        r[~self.free] = 0.0
        return r

    def step_newton_u(self, state, robin=None, guess=None):
        """Newton iterations for one step; ``guess`` overrides the start ``u^n``.

        With ``robin`` given, ``info.interior_residual`` holds the residual of
        the subdomain operator without the Robin terms (the recovered
        boundary flux on interface rows).
        """
        cfg, asm = self.config, self.asm
        dt = cfg.dt
        t1 = state.t + dt
        A0, kr = self.stiffness_u(state.S)
        b0, _ = self.loads(kr, t1)
        A, b = A0, b0
        if robin is not None:
            A = A0 + robin.matrix
            b = b0 + robin.rhs
        nodes, vals = self.dirichlet_u(t1)
        u = (state.u if guess is None else np.asarray(guess, dtype=float)).copy()
        u[nodes] = vals
        S = tr.S_from_u(self.model, u, extend=True, guess=np.clip(state.S, 0.0, 1.0))
        r = self.residual(u, S, state.S, A, b, dt)
        r0 = np.linalg.norm(r)
        tol = max(cfg.newton_abs_tol, cfg.newton_rel_tol * r0)
        rn = r0
        it = 0
        cols = asm.cols
        while rn > tol:
            if it >= cfg.newton_max_iter:
                raise StepError("Newton did not converge", t=t1, iterations=it, residual=f"{rn:.3e}", initial=f"{r0:.3e}")
            it += 1
            dsdu = tr.dS_du_from_S(self.model, S, u)
            J = self.mass * dsdu[cols] / dt + A
            J, rhs = asm.dirichlet_data(J, -r, nodes, np.zeros(nodes.size))
            du = asm.solve(J, rhs, direct_max=cfg.direct_max)
            u = u + du
            if not np.all(np.isfinite(u)):
                raise StepError("Newton produced non-finite values", t=t1, iterations=it)
            S = tr.S_from_u(self.model, u, extend=True, guess=np.clip(S, 0.0, 1.0))
            r = self.residual(u, S, state.S, A, b, dt)
            rn = np.linalg.norm(r)
        info = StepInfo(it, self._balance(state.S, S, A, u, b, dt), rn)
        if robin is not None:
            info.interior_residual = asm.matvec(self.mass, S - state.S) / dt + asm.matvec(A0, u) - b0
        return State(t1, u, S), info

    def s_coefficient(self, S):
        """``K_s h_cap Kr(S) J'(S)`` through the bounded mobility factor."""
        b, c = self.b_exp, self.c_exp
        Sc = np.clip(S, 0.0, 1.0)
        top = Sc
        if self.config.scheme == REGULARIZED_S:
            top = np.minimum(Sc, 1.0 - self.config.delta)
        with np.errstate(divide="ignore", invalid="ignore"):
            sing = (-np.expm1(c * np.log(np.where(top > 0.0, top, 0.5)))) ** (-b)
        sing = np.where(top > 0.0, sing, 1.0)
        return self.diff_scale * cm.mobility_coefficient(self.model, Sc) * sing

    def step_S(self, state, robin=None):
        cfg, asm = self.config, self.asm
        dt = cfg.dt
        t1 = state.t + dt
        Sn = state.S
        if cfg.scheme == SEMI_IMPLICIT_S and self.b_exp > 0.0 and np.any(Sn[self.free] >= 1.0):
            raise CoefficientError("J' is infinite at S = 1; use the regularized scheme")
        Sc = cm.clamp_saturation(Sn, limit=np.inf)
        coef = asm.element_quadrature_values(Sc, self.s_coefficient)
        if not np.all(np.isfinite(coef)):
            raise CoefficientError("non-finite S-form diffusion coefficient")
        A = asm.stiffness_element_data(coef)
        _, kr = self.nodal_coefficients(Sc)
        b, _ = self.loads(kr, t1)
        if robin is not None:
            A = A + robin.matrix
            b = b + robin.rhs
        lhs = self.mass / dt + A
        rhs = asm.matvec(self.mass, Sn) / dt + b
        nodes, vals = self.dirichlet_S(t1)
        lhs, rhs = asm.dirichlet_data(lhs, rhs, nodes, vals)
        S = asm.solve(lhs, rhs, direct_max=cfg.direct_max)
        if not np.all(np.isfinite(S)):
            raise StepError("non-finite solution", t=t1)
        u = tr.u_from_S(self.model, np.clip(S, 0.0, 1.0))
        info = StepInfo(1, self._balance(Sn, S, A, S, b, dt))
        return State(t1, u, S), info

    def initial_state_S(self, S0, t0=0.0):
        S0 = np.asarray(S0, dtype=float).copy()
        nodes, vals = self.dirichlet_S(t0)
        if nodes.size:
            S0[nodes] = vals
        return State(t0, tr.u_from_S(self.model, np.clip(S0, 0.0, 1.0)), S0)


def step_linear_semi_implicit_u(problem, state):
    return problem.step_linear_u(state)[0]


def step_newton_semi_implicit_u(problem, state):
    new, info = problem.step_newton_u(state)
    return new, info.iterations


def step_semi_implicit_S(problem, state):
    return problem.step_S(state)[0]


STEP_COLUMNS = ("time", "newton_iters", "min_S", "max_S", "mass_balance_residual")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def final(self):
        return self.states[-1]

    def mean_iterations(self):
        its = [d[1] for d in self.diagnostics]
        return float(np.mean(its)) if its else 0.0


def _output_steps(config, output_times):
    n = config.n_steps
    if output_times is None:
        return {n}
    steps = set()
    for t in output_times:
        if t < -1e-12 or t > config.t_end * (1 + 1e-12):
            raise ConfigError(f"output time {t} outside [0, t_end]")
        steps.add(int(round(t / config.dt)))
    steps.add(n)
    return steps


def run_transient(problem, state0, output_times=None, on_step=None):
    """March ``state0`` to ``t_end`` with the configured scheme.

    Stores states at ``output_times`` (snapped to the step grid) and one
    diagnostics row per step: time, iterations, min/max nodal S and the
    relative mass balance residual. ``on_step(state, info)`` is called after
    each step.
    """
    cfg = problem.config
    keep = _output_steps(cfg, output_times)
    traj = Trajectory()
    state = state0
    if 0 in keep:
        traj.times.append(state.t)
        traj.states.append(state)
    for k in range(1, cfg.n_steps + 1):
        state, info = problem.step(state)
        state.t = state0.t + k * cfg.dt
        traj.diagnostics.append(
            (state.t, info.iterations, float(state.S.min()), float(state.S.max()), info.mass_balance)
        )
        if on_step is not None:
            on_step(state, info)
        if k in keep:
            traj.times.append(state.t)
            traj.states.append(state)
    return traj
