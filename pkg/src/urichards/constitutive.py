"""Soil hydraulic functions: retention curve, relative permeability, Leverett J.

All functions accept scalars or numpy arrays and return numpy arrays (0-d for
scalar input). Parameters live in an immutable :class:`HydraulicModel`.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

GARDNER = "gardner"
BROOKS_COREY = "brooks_corey"
HAVERKAMP = "haverkamp"
VAN_GENUCHTEN = "van_genuchten"
FAMILIES = (GARDNER, BROOKS_COREY, HAVERKAMP, VAN_GENUCHTEN)

NATIVE = "native"
POWER_LAW = "power_law"

#: saturations within this distance outside [0, 1] are clamped silently
CLAMP_SILENT = 1e-12
#: saturations within this distance are clamped with a recorded event; beyond it we raise
CLAMP_LIMIT = 1e-8


class ParameterError(ValueError):
    """Hydraulic parameters outside their admissible domain."""


class SaturationDomainError(ValueError):
    """Saturation argument outside [0, 1]."""


class PressureDivergenceError(ArithmeticError):
    """Pressure head diverges (S = 0 on the Leverett curve)."""


class SingularityError(ArithmeticError):
    """J'(S) evaluated at a singular endpoint."""


class UnsupportedModelError(ValueError):
    """Model violates the boundedness condition of the transformed equation."""


class ClampLog:
    """Counts clamp events so runs can report them."""

    def __init__(self):
        self.count = 0
        self.worst = 0.0

    def record(self, n, worst):
        self.count += int(n)
        self.worst = max(self.worst, float(worst))
        log.debug("clamped %d saturation values (worst violation %.3e)", n, worst)


clamp_log = ClampLog()


def clamp_saturation(S, limit=CLAMP_LIMIT):
    """Clip ``S`` into [0, 1], recording small violations and raising on large ones."""
    S = np.asarray(S, dtype=float)
    viol = np.maximum(-S, S - 1.0)
    worst = float(viol.max(initial=0.0))
    if worst > limit or np.isnan(S).any():
        raise SaturationDomainError(f"saturation outside [0, 1] by {worst:.3e}")
    if worst > CLAMP_SILENT:
        clamp_log.record(np.count_nonzero(viol > CLAMP_SILENT), worst)
    return np.clip(S, 0.0, 1.0)


@dataclass(frozen=True)
class HydraulicModel:
    """Constitutive parameter set for one soil.

    ``alpha`` and ``h_cap`` are reciprocal; give either one. ``gravity_scale``
    multiplies the gravity flux (``rho * g`` when pressures are in stress units).
    """

    family: str = VAN_GENUCHTEN
    kr_variant: str = NATIVE
    theta_s: float = 1.0
    theta_r: float = 0.0
    K_s: float = 1.0
    h_cap: Optional[float] = None
    alpha: Optional[float] = None
    n: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    A: Optional[float] = None
    lambda_bc: Optional[float] = None
    B: Optional[float] = None
    gravity_scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown model family {self.family!r}")
        if self.kr_variant not in (NATIVE, POWER_LAW):
            raise ParameterError(f"unknown relative permeability variant {self.kr_variant!r}")
        if self.h_cap is None and self.alpha is None:
            raise ParameterError("one of alpha or h_cap is required")
        if self.h_cap is None:
            object.__setattr__(self, "h_cap", 1.0 / self._positive("alpha"))
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self._positive("h_cap"))
        self._positive("alpha")
        self._positive("h_cap")
        if not math.isclose(self.alpha * self.h_cap, 1.0, rel_tol=1e-9):
            raise ParameterError("alpha and h_cap must be reciprocal")
        if not (0.0 <= self.theta_r < self.theta_s <= 1.0):
            raise ParameterError("need 0 <= theta_r < theta_s <= 1")
        self._positive("K_s")
        if self.family == VAN_GENUCHTEN:
            if self.n is None or not self.n > 1.0:
                raise ParameterError("van Genuchten requires n > 1")
        elif self.family == HAVERKAMP:
            if self.beta is None or not self.beta > 1.0:
                raise ParameterError("Haverkamp requires beta > 1")
            if self.kr_variant == NATIVE:
                self._positive("gamma")
                self._positive("A")
        elif self.family == BROOKS_COREY:
            self._positive("lambda_bc")
        if self.kr_variant == POWER_LAW or self.family == BROOKS_COREY:
            self._positive("B")

    def _positive(self, name):
        value = getattr(self, name)
        if value is None or not value > 0.0:
            raise ParameterError(f"{self.family} requires {name} > 0")
        return value

    @property
    def m(self):
        return 1.0 - 1.0 / self.n if self.family == VAN_GENUCHTEN else None

    @property
    def phi(self):
        return self.theta_s - self.theta_r

    @property
    def kr_kind(self):
        """Effective relative-permeability law: ``'power_law'`` or the family name."""
        if self.kr_variant == POWER_LAW or self.family == BROOKS_COREY:
            return POWER_LAW
        return self.family

    @property
    def jprime_constants(self):
        """``(C, a, b, c)`` with ``J'(S) = C S^-a (1 - S^c)^-b``."""
        if self.family == GARDNER:
            return 1.0, 1.0, 0.0, 1.0
        if self.family == BROOKS_COREY:
            lam = self.lambda_bc
            return 1.0 / lam, 1.0 + 1.0 / lam, 0.0, 1.0
        if self.family == HAVERKAMP:
            bt = self.beta
            return 1.0 / bt, 1.0 + 1.0 / bt, 1.0 - 1.0 / bt, 1.0
        n, m = self.n, self.m
        return 1.0 / (n * m), 1.0 / m, m, 1.0 / m

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data):
        """Build from a config mapping; ``rho`` and ``g`` set ``gravity_scale``."""
        data = dict(data)
        data.pop("units", None)
        data.pop("name", None)
        rho = data.pop("rho", None)
        g = data.pop("g", None)
        if rho is not None or g is not None:
            if rho is None or g is None:
                raise ParameterError("rho and g must be given together")
            data.setdefault("gravity_scale", rho * g)
        if "kr" in data:
            data["kr_variant"] = data.pop("kr")
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ParameterError(f"unknown model parameters {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


def _as_array(x):
    return np.asarray(x, dtype=float)


def _check_unit_interval(S):
    S = _as_array(S)
    if np.any(S < 0.0) or np.any(S > 1.0) or np.isnan(S).any():
        raise SaturationDomainError("saturation must lie in [0, 1]")
    return S


def saturation_from_pressure(model, psi):
    """Effective saturation for pressure head ``psi`` (1 for ``psi >= 0``)."""
    psi = _as_array(psi)
    x = np.abs(model.alpha * np.minimum(psi, 0.0))
    with np.errstate(over="ignore", divide="ignore"):
        if model.family == GARDNER:
            S = np.exp(-x)
        elif model.family == BROOKS_COREY:
            S = np.where(x <= 1.0, 1.0, np.power(np.maximum(x, 1.0), -model.lambda_bc))
        elif model.family == HAVERKAMP:
            S = 1.0 / (1.0 + x ** model.beta)
        else:
            S = (1.0 + x ** model.n) ** (-model.m)
    return np.where(psi >= 0.0, 1.0, S)


def leverett_J(model, S):
    """Dimensionless capillary curve ``J(S) <= 0``; diverges at S = 0."""
    S = _check_unit_interval(S)
    if np.any(S == 0.0):
        raise PressureDivergenceError("pressure head diverges at S = 0")
    if model.family == GARDNER:
        return np.log(S)
    # extremely dry states overflow to -inf, which is the honest answer
    with np.errstate(over="ignore"):
        if model.family == BROOKS_COREY:
            return -(S ** (-1.0 / model.lambda_bc))
        if model.family == HAVERKAMP:
            return -(np.maximum(1.0 / S - 1.0, 0.0) ** (1.0 / model.beta))
        return -(np.maximum(S ** (-1.0 / model.m) - 1.0, 0.0) ** (1.0 / model.n))


def leverett_J_prime(model, S):
    """``J'(S) = C S^-a (1 - S^c)^-b``; singular at 0 and, when ``b > 0``, at 1."""
    S = _check_unit_interval(S)
    C, a, b, c = model.jprime_constants
    if np.any(S == 0.0) or (b > 0.0 and np.any(S == 1.0)):
        raise SingularityError("J' is singular at this saturation")
    return C * S ** (-a) * (-np.expm1(c * np.log(S))) ** (-b)


def pressure_from_saturation(model, S):
    """Pressure head ``h_cap * J(S)``."""
    return model.h_cap * leverett_J(model, S)


def relative_permeability(model, S):
    """Relative permeability ``Kr(S)`` in [0, 1]."""
    S = _check_unit_interval(S)
    kind = model.kr_kind
    if kind == POWER_LAW:
        return S ** model.B
    if kind == GARDNER:
        return S.copy()
    if kind == HAVERKAMP:
        with np.errstate(divide="ignore", over="ignore"):
            J = -(np.maximum(1.0 / S - 1.0, 0.0) ** (1.0 / model.beta))
            return 1.0 / (1.0 + np.abs(model.A * model.h_cap * J) ** model.gamma)
    m = model.m
    x = S ** (1.0 / m)
    with np.errstate(divide="ignore"):
        return np.sqrt(S) * (-np.expm1(m * np.log1p(-x))) ** 2


def _vg_ratio(x, m):
    """``(1 - (1 - x)^m) / x`` with its limit ``m`` at ``x = 0``."""
    x = _as_array(x)
    safe = np.where(x > 0.0, x, 1.0)
    with np.errstate(divide="ignore"):
        val = -np.expm1(m * np.log1p(-np.minimum(safe, 1.0))) / safe
    return np.where(x > 0.0, val, m)


def mobility_coefficient(model, S):
    """Fused ``Kr(S) * S^-a``, finite on [0, 1] for models passing the boundedness check."""
    ok, why = check_boundedness(model)
    if not ok:
        raise UnsupportedModelError(why)
    S = _check_unit_interval(S)
    C, a, b, c = model.jprime_constants
    kind = model.kr_kind
    if kind == POWER_LAW:
        return S ** (model.B - a)
    if kind == GARDNER:
        return np.ones_like(S)
    if kind == HAVERKAMP:
        e = model.gamma / model.beta
        k = (model.A * model.h_cap) ** model.gamma
        return S ** (e - a) / (S ** e + k * (1.0 - S) ** e)
    m = model.m
    return S ** (0.5 + 1.0 / m) * _vg_ratio(S ** (1.0 / m), m) ** 2


def check_boundedness(model):
    """Whether ``lim_{S->0} Kr(S) S^-a`` is finite; returns ``(flag, explanation)``."""
    kind = model.kr_kind
    C, a, b, c = model.jprime_constants
    if kind == GARDNER:
        return True, "Gardner: Kr(S) S^-1 = 1"
    if kind == VAN_GENUCHTEN:
        return True, "van Genuchten-Mualem: bounded since n > 1"
    if kind == HAVERKAMP:
        ok = model.gamma >= model.beta + 1.0
        return ok, f"Haverkamp: need gamma >= beta + 1 (gamma={model.gamma}, beta={model.beta})"
    ok = model.B >= a
    return ok, f"power-law Kr: need B >= a = {a:.6g} (B={model.B})"


def water_content(model, S):
    return model.theta_r + model.phi * _as_array(S)


def saturation_from_theta(model, theta):
    return (_as_array(theta) - model.theta_r) / model.phi
