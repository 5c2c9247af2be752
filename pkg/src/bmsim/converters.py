"""Averaged DC-DC converter models expressed as switched RLC circuits.

Encodings (``R = 0`` throughout)::

    buck        Gamma0 = Gamma1 = 1,  B0 = 0, B1 = 1
    boost       Gamma0 = 1, Gamma1 = 0, B0 = B1 = 1
    buck-boost  Gamma0 = 1, Gamma1 = 0, B0 = 0, B1 = 1
    cuk         Gamma0 = I2, Gamma1 = [[0, 0], [1, 1]], B0 = B1 = [1, 0]^T,
                G = diag(0, G)

The Cuk steady-state output is negative; its target voltage must be given as a
negative number.

Buck-boost closed forms follow from the steady state of
``-L dI/dt = (1-u) V - u Vs``, ``C dV/dt = (1-u) I - G V``: the first equation
gives ``V = u Vs / (1 - u)``, hence ``u = V / (V + Vs)``, and the second gives
``I = G V / (1 - u) = G V (V + Vs) / Vs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Setpoint, SwitchedRlcSystem, srlc_dynamics, CircuitState
from .errors import DomainError, InvalidParams, NoFeasibleInput

KINDS = ("buck", "boost", "buckboost", "cuk")


@dataclass(frozen=True)
class ConverterParams:
    """Converter parameters in SI units.

    For the Cuk converter ``L``/``C`` are the input-side elements and ``L2``/``C2``
    the output-side ones.
    """

    kind: str
    L: float
    C: float
    G: float
    Vs: float
    L2: Optional[float] = None
    C2: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"unknown converter kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        values = {"L": self.L, "C": self.C}
        if self.kind == "cuk":
            if self.L2 is None or self.C2 is None:
                raise InvalidParams("cuk converter needs L2 and C2")
            values.update(L2=self.L2, C2=self.C2)
        for name, v in values.items():
            if not (np.isfinite(v) and v > 0):
                raise InvalidParams(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.G) and self.G >= 0):
            raise InvalidParams(f"G must be nonnegative, got {self.G}")
        if not np.isfinite(self.Vs) or self.Vs == 0:
            raise InvalidParams("Vs must be nonzero")

    def with_load(self, G):
        return ConverterParams(self.kind, self.L, self.C, G, self.Vs, self.L2, self.C2)


def make_converter(p: ConverterParams) -> SwitchedRlcSystem:
    if p.kind == "cuk":
        return SwitchedRlcSystem(
            L=np.diag([p.L, p.L2]),
            C=np.diag([p.C, p.C2]),
            R=np.zeros((2, 2)),
            G=np.diag([0.0, p.G]),
            Gamma0=np.eye(2),
            Gamma1=np.array([[0.0, 0.0], [1.0, 1.0]]),
            B0=np.array([[1.0], [0.0]]),
            B1=np.array([[1.0], [0.0]]),
            Vs=[p.Vs],
        )
    gamma0, gamma1, b0, b1 = {
        "buck": (1.0, 1.0, 0.0, 1.0),
        "boost": (1.0, 0.0, 1.0, 1.0),
        "buckboost": (1.0, 0.0, 0.0, 1.0),
    }[p.kind]
    return SwitchedRlcSystem(p.L, p.C, 0.0, p.G, gamma0, gamma1, b0, b1, [p.Vs])


def converter_setpoint(p: ConverterParams, Vstar) -> Setpoint:
    """Closed-form steady state regulating the load voltage to ``Vstar``."""
    vs, g, v = float(p.Vs), float(p.G), float(Vstar)
    if p.kind == "buck":
        u = v / vs
        _require_interior(u, p.kind, v)
        sp = Setpoint([v], [g * v], [u])
    elif p.kind == "boost":
        if v == 0:
            raise NoFeasibleInput("boost target voltage must be nonzero")
        u = 1.0 - vs / v
        _require_interior(u, p.kind, v)
        sp = Setpoint([v], [g * v * v / vs], [u])
    elif p.kind == "buckboost":
        if v + vs == 0:
            raise NoFeasibleInput("buck-boost target equals -Vs")
        u = v / (v + vs)
        _require_interior(u, p.kind, v)
        sp = Setpoint([v], [g * v * (v + vs) / vs], [u])
    else:
        if v * vs >= 0:
            raise InvalidParams(
                "cuk output polarity is inverted: the target output voltage must have the opposite sign of Vs"
            )
        u = v / (v - vs)
        _require_interior(u, p.kind, v)
        v1 = vs / (1.0 - u)
        i2 = g * v
        i1 = -u * i2 / (1.0 - u)
        sp = Setpoint([v1, v], [i1, i2], [u])
    return sp


def _require_interior(u, kind, v):
    if not (0.0 < u < 1.0):
        raise NoFeasibleInput(f"{kind} cannot reach {v:g} V: duty cycle would be {u:g}")


def setpoint_residual(p: ConverterParams, sp: Setpoint) -> float:
    """Largest derivative of the averaged model at the setpoint, relative to the state size."""
    dI, dV = srlc_dynamics(make_converter(p), CircuitState(sp.Ibar, sp.Vstar), sp.ubar)
    scale = max(np.abs(sp.Ibar).max(), np.abs(sp.Vstar).max(), 1.0)
    return float(max(np.abs(dI).max() * p.L, np.abs(dV).max() * p.C) / scale)


# Integrating factors for the scalar boost output y = dI V - dV I.

@dataclass(frozen=True)
class GammaChoice:
    """Integrating factor ``m(I, V)`` and its potential ``gamma`` with ``d gamma/dt = m y``.

    ``code``/``scale``/``current``/``voltage`` describe the choice to the compiled
    integrator: ``code`` 0 is the linear potential ``scale * I[current]`` (m = 1),
    the others are the nonlinear boost factors.
    """

    name: str
    m: Callable
    gamma: Optional[Callable]
    domain: str
    code: int
    scale: float = 1.0
    current: int = 0
    voltage: int = 0

    def m_value(self, I, V):
        return self.m(_scalar(I, self.current), _scalar(V, self.voltage))

    def gamma_value(self, I, V):
        if self.gamma is None:
            raise DomainError(f"{self.name} has no potential")
        return self.gamma(_scalar(I, self.current), _scalar(V, self.voltage))


def _scalar(x, idx):
    a = np.atleast_1d(np.asarray(x, dtype=float))
    return float(a[idx])


def _need(cond, what):
    if not cond:
        raise DomainError(f"integrating factor evaluated outside its domain ({what})")


def _m_inv_v2(I, V):
    _need(V > 0, "V > 0")
    return 1.0 / (V * V)


def _g_inv_v2(I, V):
    _need(V > 0, "V > 0")
    return I / V


def _m_inv_i2(I, V):
    _need(I > 0, "I > 0")
    return 1.0 / (I * I)


def _g_inv_i2(I, V):
    _need(I > 0, "I > 0")
    return -V / I


def _m_inv_norm2(I, V):
    _need(V > 0, "V > 0")
    return 1.0 / (V * V + I * I)


def _g_inv_norm2(I, V):
    _need(V > 0, "V > 0")
    return math.atan(I / V)


def _m_inv_iv(I, V):
    _need(I > 0 and V > 0, "I > 0 and V > 0")
    return 1.0 / (I * V)


def _g_inv_iv(I, V):
    _need(I > 0 and V > 0, "I > 0 and V > 0")
    return math.log(I / V)


GAMMA_CODES = {"identity": 0, "inv_V2": 1, "inv_I2": 2, "inv_norm2": 3, "inv_IV": 4}


def boost_gamma_catalogue():
    """The five integrating factors for the boost output ``dI V - dV I``.

    The identity row has no potential: ``dI V - dV I`` is not an exact derivative.
    """
    return [
        GammaChoice("identity", lambda I, V: 1.0, None, "all (I, V)", GAMMA_CODES["identity"]),
        GammaChoice("inv_V2", _m_inv_v2, _g_inv_v2, "V > 0", GAMMA_CODES["inv_V2"]),
        GammaChoice("inv_I2", _m_inv_i2, _g_inv_i2, "I > 0", GAMMA_CODES["inv_I2"]),
        GammaChoice("inv_norm2", _m_inv_norm2, _g_inv_norm2, "V > 0", GAMMA_CODES["inv_norm2"]),
        GammaChoice("inv_IV", _m_inv_iv, _g_inv_iv, "I > 0 and V > 0", GAMMA_CODES["inv_IV"]),
    ]


def boost_gamma(name):
    for gc in boost_gamma_catalogue():
        if gc.name == name:
            return gc
    raise KeyError(f"no boost integrating factor named {name!r}")


def buck_gamma(Vs):
    """Buck output ``dI Vs`` integrates with ``m = 1`` to ``gamma = Vs I``."""
    vs = float(Vs)
    return GammaChoice("identity", lambda I, V: 1.0, lambda I, V: vs * I, "all (I, V)", 0, scale=vs)
