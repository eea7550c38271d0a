"""The bounded auxiliary variable ``u(S) = int_0^S (1 - s^c)^-b ds`` and its inverse.

For van Genuchten the integral is an incomplete beta function and is evaluated
by the compiled kernels; the other families have closed forms.
"""
from __future__ import annotations

import functools

import numpy as np

from . import constitutive as cm
from . import kernels

#: inputs this far outside [0, u_max] are clamped instead of rejected
U_CLAMP_BAND = 1e-10
GRID_POINTS = 64


class TransformDomainError(ValueError):
    """Argument outside the domain of the transform."""


class InversionError(ArithmeticError):
    """The S(u) root-finder did not converge."""


def incomplete_beta(w, p, q):
    """``B(w; p, q) = int_0^w s^(p-1) (1 - s)^(q-1) ds`` for ``w`` in [0, 1], ``p, q > 0``."""
    if not (p > 0.0 and q > 0.0):
        raise TransformDomainError("incomplete beta needs p > 0 and q > 0")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0.0) or np.any(w > 1.0) or np.isnan(w).any():
        raise TransformDomainError("incomplete beta needs w in [0, 1]")
    out = kernels.incomplete_beta(w, float(p), float(q))
    return out.reshape(w.shape)


class TransformTable:
    """Per-model transform data: ``u_max``, tolerance and a bracketing grid."""

    def __init__(self, model, inversion_tol=1e-13):
        self.model = model
        self.inversion_tol = inversion_tol
        C, a, b, c = model.jprime_constants
        self.b = b
        self.c = c
        fam = model.family
        if fam in (cm.GARDNER, cm.BROOKS_COREY):
            self.u_max = 1.0
        elif fam == cm.HAVERKAMP:
            self.u_max = model.beta
        else:
            self.u_max = kernels.complete_beta(1.0 / c, 1.0 - b) / c
        self.grid_S = np.linspace(0.0, 1.0, GRID_POINTS + 1)
        self.grid_u = self._forward(self.grid_S)
        if not np.all(np.diff(self.grid_u) > 0.0):
            raise InversionError("transform sample grid is not strictly increasing")

    def _forward(self, S):
        fam = self.model.family
        if fam in (cm.GARDNER, cm.BROOKS_COREY):
            return S.copy()
        if fam == cm.HAVERKAMP:
            bt = self.model.beta
            return bt * (1.0 - (1.0 - S) ** (1.0 / bt))
        return kernels.u_from_s(S, self.b, self.c)

    def _inverse(self, u, guess=None):
        fam = self.model.family
        if fam in (cm.GARDNER, cm.BROOKS_COREY):
            return u.copy()
        if fam == cm.HAVERKAMP:
            bt = self.model.beta
            return 1.0 - (1.0 - u / bt) ** bt
        S, _ = kernels.s_from_u(u, self.b, self.c, self.grid_S, self.grid_u, self.inversion_tol, guess)
        return S

    def dS_du_from_S(self, S):
        if self.b == 0.0:
            return np.ones_like(S)
        return kernels.dsdu_from_s(S, self.b, self.c)


@functools.lru_cache(maxsize=64)
def table_for(model):
    return TransformTable(model)


def u_max(model):
    """Upper bound of ``u``, reached at full saturation."""
    return table_for(model).u_max


def u_from_S(model, S):
    """Transform a saturation in [0, 1] to ``u`` in [0, u_max]."""
    S = np.asarray(S, dtype=float)
    if np.any(S < 0.0) or np.any(S > 1.0) or np.isnan(S).any():
        raise TransformDomainError("u_from_S needs S in [0, 1]")
    tab = table_for(model)
    return tab._forward(S.ravel()).reshape(S.shape)


def S_from_u(model, u, extend=False, guess=None):
    """Invert the transform.

    With ``extend=False`` inputs must lie in ``[0, u_max]`` up to a
    ``1e-10`` clamp band. With ``extend=True`` the map is continued as
    ``S = u`` below zero and ``S = 1`` above ``u_max``; the solvers use this
    to carry small undershoots and positive pressure heads without failing.
    """
    u = np.asarray(u, dtype=float)
    tab = table_for(model)
    flat = u.ravel()
    if np.isnan(flat).any():
        raise TransformDomainError("S_from_u received NaN")
    if not extend:
        if np.any(flat < -U_CLAMP_BAND) or np.any(flat > tab.u_max + U_CLAMP_BAND):
            raise TransformDomainError(f"u outside [0, {tab.u_max:.6g}]")
    clipped = np.clip(flat, 0.0, tab.u_max)
    g = None if guess is None else np.clip(np.asarray(guess, dtype=float).ravel(), 0.0, 1.0)
    S = tab._inverse(clipped, g)
    if extend:
        S = np.where(flat < 0.0, flat, S)
    return S.reshape(u.shape)


def dS_du(model, u, extend=False):
    """``dS/du = (1 - S(u)^c)^b``, from the closed form after inversion."""
    u = np.asarray(u, dtype=float)
    S = S_from_u(model, u, extend=extend)
    return dS_du_from_S(model, S, u if extend else None)


def dS_du_from_S(model, S, u=None):
    """Derivative given the saturation; with ``u`` given, uses the extended map."""
    tab = table_for(model)
    S = np.asarray(S, dtype=float)
    d = tab.dS_du_from_S(np.clip(S, 0.0, 1.0).ravel()).reshape(S.shape)
    if u is not None:
        u = np.asarray(u, dtype=float)
        d = np.where(u < 0.0, 1.0, np.where(u > tab.u_max, 0.0, d))
    return d


def pressure_from_u(model, u):
    """Pressure head of ``u`` on the extended map.

    Above ``u_max`` the head is ``h_cap * C * (u - u_max) >= 0``, which keeps
    the saturated flux ``K_s grad(psi)`` equal to the transformed flux. At or
    below ``u = 0`` the head is ``-inf``.
    """
    u = np.asarray(u, dtype=float)
    tab = table_for(model)
    C = model.jprime_constants[0]
    S = S_from_u(model, u, extend=True)
    out = np.full(u.shape, -np.inf)
    mid = (S > 0.0) & (S < 1.0)
    if np.any(mid):
        out[mid] = cm.pressure_from_saturation(model, S[mid])
    sat = S >= 1.0
    out[sat] = model.h_cap * C * np.maximum(u[sat] - tab.u_max, 0.0)
    return out


def u_from_pressure(model, psi):
    """Inverse of :func:`pressure_from_u` (``-inf`` maps to 0)."""
    psi = np.asarray(psi, dtype=float)
    if np.isnan(psi).any():
        raise TransformDomainError("pressure head is NaN")
    tab = table_for(model)
    C = model.jprime_constants[0]
    neg = psi < 0.0
    S = cm.saturation_from_pressure(model, np.where(neg, psi, -1.0))
    u = u_from_S(model, np.where(neg, S, 1.0))
    return np.where(neg, u, tab.u_max + np.maximum(psi, 0.0) / (model.h_cap * C))
