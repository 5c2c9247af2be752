"""Voltage controllers acting on the input rate of the extended circuit.

Every law is available as a plain function returning the input rate, and as a
configured controller object that also knows its shaped storage (for audits)
and how to describe itself to the compiled integrator.

Laws, with ``mu`` the exogenous passive input (default 0):

* output shaping, constant topology: ``v = mu - ki B^T (I - Ibar) - kd B^T dI``
* integrator form of the same: ``u = -(ki phi + kd B^T I)``,
  ``dphi = -mu / ki + B^T (I - Ibar)``
* output shaping, switched: ``v = m (mu - ki (gamma - gamma*) - kd m y)``
* input shaping: ``v = (mu - ki (u - ubar) - y) / kd`` (vector gains act per channel)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernel
from .converters import GAMMA_CODES, GammaChoice
from .core import (
    CircuitState,
    ExtendedState,
    RlcSystem,
    Setpoint,
    SwitchedRlcSystem,
    krasovskii_storage,
    rlc_output,
    srlc_output,
)
from .errors import DimensionError, DomainError, InvalidParams


def _vec(x, p, name):
    a = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if a.size == 1 and p > 1:
        a = np.full(p, a[0])
    if a.size != p:
        raise DimensionError(f"{name} needs {p} entries, got {a.size}")
    return a


@dataclass(frozen=True)
class Gains:
    """Controller gains; ``kd``/``ki`` may be per-channel vectors."""

    kd: object
    ki: object
    mu: object = 0.0

    def __post_init__(self):
        for name in ("kd", "ki"):
            a = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(a)) or np.any(a <= 0):
                raise InvalidParams(f"{name} must be positive")

    def vectors(self, p):
        return _vec(self.kd, p, "kd"), _vec(self.ki, p, "ki"), _vec(self.mu, p, "mu")


@dataclass(frozen=True)
class ControllerState:
    u: np.ndarray
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float)).ravel()
        if not np.all(np.isfinite(u)):
            raise ValueError("controller state must be finite")
        object.__setattr__(self, "u", u)
        if self.phi is not None:
            object.__setattr__(self, "phi", np.atleast_1d(np.asarray(self.phi, dtype=float)).ravel())


# Plain laws

def output_shaping_rlc(sys: RlcSystem, e: ExtendedState, sp: Setpoint, g: Gains):
    kd, ki, mu = g.vectors(sys.m)
    return mu - ki * (sys.B.T @ (e.I - sp.Ibar)) - kd * rlc_output(sys, e.dI)


def output_shaping_rlc_alt(sys: RlcSystem, s: CircuitState, cs: ControllerState, sp: Setpoint, g: Gains):
    """Static source value and integrator rate; needs no current derivative."""
    kd, ki, mu = g.vectors(sys.m)
    u_s = -(ki * cs.phi + kd * (sys.B.T @ s.I))
    phidot = -mu / ki + sys.B.T @ (s.I - sp.Ibar)
    return u_s, phidot


def output_shaping_srlc(sys: SwitchedRlcSystem, e: ExtendedState, gc: GammaChoice, gamma_star, g: Gains):
    kd, ki, mu = g.vectors(1)
    m = gc.m_value(e.I, e.V)
    if m == 0:
        raise DomainError("integrating factor vanishes")
    gamma = gc.gamma_value(e.I, e.V)
    gamma_dot = m * srlc_output(sys, e.state, e.dI, e.dV)
    return m * (mu - ki * (gamma - gamma_star) - kd * gamma_dot)


def input_shaping_rlc(sys: RlcSystem, e: ExtendedState, sp: Setpoint, g: Gains):
    kd, ki, mu = g.vectors(sys.m)
    return (mu - ki * (e.u - sp.ubar) - rlc_output(sys, e.dI)) / kd


def input_shaping_srlc(sys: SwitchedRlcSystem, e: ExtendedState, sp: Setpoint, g: Gains):
    kd, ki, mu = g.vectors(sys.n_channels)
    return (mu - ki * (e.u - sp.ubar) - srlc_output(sys, e.state, e.dI, e.dV)) / kd


def network_input_shaping(net, e: ExtendedState, ubar, Kd, Ki):
    """``du = -Kd^{-1} (Ki (u - ubar) + y_DC)`` with diagonal gain matrices."""
    from .network import network_output_ydc

    n = net.n_nodes
    kd = np.diag(np.atleast_2d(Kd)) if np.ndim(Kd) == 2 else _vec(Kd, n, "Kd")
    ki = np.diag(np.atleast_2d(Ki)) if np.ndim(Ki) == 2 else _vec(Ki, n, "Ki")
    u = np.asarray(e.u, dtype=float)
    ubar = _vec(ubar, n, "ubar")
    if u.shape != (n,):
        raise DimensionError(f"network has {n} duty channels, got {u.size}")
    if np.any(kd <= 0) or np.any(ki <= 0):
        raise InvalidParams("Kd and Ki must be positive definite")
    return -(ki * (u - ubar) + network_output_ydc(net, e.state, e.dI, e.dV)) / kd


# Configured controllers

def _gamma_rows(code, scale, I1, V1):
    with np.errstate(divide="ignore", invalid="ignore"):
        if code == 0:
            return scale * I1
        if code == 1:
            return np.where(V1 > 0, I1 / V1, np.nan)
        if code == 2:
            return np.where(I1 > 0, -V1 / I1, np.nan)
        if code == 3:
            return np.where(V1 > 0, np.arctan(I1 / V1), np.nan)
        return np.where((I1 > 0) & (V1 > 0), np.log(I1 / V1), np.nan)


def _m_rows(code, I1, V1):
    with np.errstate(divide="ignore", invalid="ignore"):
        return {
            0: np.ones_like(I1),
            1: np.where(V1 > 0, 1.0 / V1**2, np.nan),
            2: np.where(I1 > 0, 1.0 / I1**2, np.nan),
            3: np.where(V1 > 0, 1.0 / (V1**2 + I1**2), np.nan),
            4: np.where((I1 > 0) & (V1 > 0), 1.0 / (I1 * V1), np.nan),
        }[code]


@dataclass(frozen=True)
class InputShaping:
    """Input shaping for switched circuits, DC networks and constant-topology circuits."""

    gains: Gains
    setpoint: Setpoint
    method: str = field(default="input_shaping", init=False)

    law = _kernel.LAW_INPUT

    def rate(self, sys, e):
        if isinstance(sys, RlcSystem):
            return input_shaping_rlc(sys, e, self.setpoint, self.gains)
        return input_shaping_srlc(sys, e, self.setpoint, self.gains)

    def shaping_term(self, sys, I, V, u):
        p = _channels(sys)
        _, ki, _ = self.gains.vectors(p)
        du = np.atleast_2d(u) - self.setpoint.ubar
        return 0.5 * (du**2) @ ki

    def shaped_storage(self, sys, e):
        return krasovskii_storage(sys, e.dI, e.dV) + float(self.shaping_term(sys, e.I[None], e.V[None], e.u[None])[0])

    def with_setpoint(self, sp):
        return InputShaping(self.gains, sp)

    def initial_controller_state(self, sys, u0, I0):
        return _vec(u0, _channels(sys), "u0")

    def kernel_args(self, sys):
        p = _channels(sys)
        kd, ki, mu = self.gains.vectors(p)
        return _kernel_tuple(self.law, kd, ki, mu, _vec(self.setpoint.ubar, p, "ubar"), np.zeros(p))


@dataclass(frozen=True)
class OutputShaping:
    """Output shaping; a switched plant needs an integrating factor ``gamma``."""

    gains: Gains
    setpoint: Setpoint
    gamma: Optional[GammaChoice] = None
    method: str = field(default="output_shaping", init=False)

    @property
    def law(self):
        return _kernel.LAW_OUTPUT_RLC if self.gamma is None else _kernel.LAW_OUTPUT_SWITCHED

    @property
    def gamma_star(self):
        return self.gamma.gamma_value(self.setpoint.Ibar, self.setpoint.Vstar)

    def rate(self, sys, e):
        if isinstance(sys, RlcSystem):
            return output_shaping_rlc(sys, e, self.setpoint, self.gains)
        return output_shaping_srlc(sys, e, self.gamma, self.gamma_star, self.gains)

    def shaping_term(self, sys, I, V, u):
        I, V = np.atleast_2d(I), np.atleast_2d(V)
        if self.gamma is None:
            _, ki, _ = self.gains.vectors(sys.m)
            d = (I - self.setpoint.Ibar) @ sys.B
            return 0.5 * (d**2) @ ki
        _, ki, _ = self.gains.vectors(1)
        gc = self.gamma
        g = _gamma_rows(gc.code, gc.scale, I[:, gc.current], V[:, gc.voltage])
        return 0.5 * ki[0] * (g - self.gamma_star) ** 2

    def shaped_storage(self, sys, e):
        return krasovskii_storage(sys, e.dI, e.dV) + float(self.shaping_term(sys, e.I[None], e.V[None], e.u[None])[0])

    def integrating_factor(self, I, V):
        gc = self.gamma
        return _m_rows(gc.code, np.atleast_2d(I)[:, gc.current], np.atleast_2d(V)[:, gc.voltage])

    def with_setpoint(self, sp):
        return OutputShaping(self.gains, sp, self.gamma)

    def initial_controller_state(self, sys, u0, I0):
        return _vec(u0, _channels(sys), "u0")

    def kernel_args(self, sys):
        p = _channels(sys)
        kd, ki, mu = self.gains.vectors(p)
        if self.gamma is None:
            if not isinstance(sys, RlcSystem):
                raise InvalidParams("output shaping of a switched circuit needs an integrating factor")
            target = sys.B.T @ self.setpoint.Ibar
            return _kernel_tuple(self.law, kd, ki, mu, np.zeros(p), target)
        if p != 1:
            raise DimensionError("integrating-factor output shaping handles one switch")
        gc = self.gamma
        return _kernel_tuple(self.law, kd, ki, mu, np.zeros(p), np.zeros(p),
                             gc.code, gc.scale, gc.current, gc.voltage, self.gamma_star)


@dataclass(frozen=True)
class OutputShapingAlt:
    """Integrator form of constant-topology output shaping (no current derivative)."""

    gains: Gains
    setpoint: Setpoint
    method: str = field(default="output_shaping_alt", init=False)

    law = _kernel.LAW_OUTPUT_RLC_ALT

    def rate(self, sys, e):
        return output_shaping_rlc(sys, e, self.setpoint, self.gains)

    def shaping_term(self, sys, I, V, u):
        return OutputShaping(self.gains, self.setpoint).shaping_term(sys, I, V, u)

    def shaped_storage(self, sys, e):
        return OutputShaping(self.gains, self.setpoint).shaped_storage(sys, e)

    def with_setpoint(self, sp):
        return OutputShapingAlt(self.gains, sp)

    def initial_controller_state(self, sys, u0, I0):
        """``phi(0)`` realising the source value ``u0`` at the initial current."""
        kd, ki, _ = self.gains.vectors(sys.m)
        return -(_vec(u0, sys.m, "u0") + kd * (sys.B.T @ np.asarray(I0, dtype=float))) / ki

    def kernel_args(self, sys):
        kd, ki, mu = self.gains.vectors(sys.m)
        return _kernel_tuple(self.law, kd, ki, mu, np.zeros(sys.m), sys.B.T @ self.setpoint.Ibar)


def _channels(sys):
    return sys.m if isinstance(sys, RlcSystem) else sys.n_channels


def _kernel_tuple(law, kd, ki, mu, ubar, target, gcode=0, gscale=1.0, gi=0, gv=0, gstar=0.0):
    return (int(law), np.ascontiguousarray(kd), np.ascontiguousarray(ki), np.ascontiguousarray(mu),
            np.ascontiguousarray(ubar, dtype=float), np.ascontiguousarray(target, dtype=float),
            int(gcode), float(gscale), int(gi), int(gv), float(gstar))


Controller = (InputShaping, OutputShaping, OutputShapingAlt)


def build_controller(method, gains, setpoint, gamma=None):
    if method == "input_shaping":
        return InputShaping(gains, setpoint)
    if method == "output_shaping":
        return OutputShaping(gains, setpoint, gamma)
    if method == "output_shaping_alt":
        return OutputShapingAlt(gains, setpoint)
    raise InvalidParams(f"unknown controller method {method!r}")


def controller_preset(name):
    """Controller of the named preset (see ``bmsim.presets``)."""
    from .presets import build_preset

    return build_preset(name).controller


__all__ = [
    "Gains",
    "ControllerState",
    "InputShaping",
    "OutputShaping",
    "OutputShapingAlt",
    "GAMMA_CODES",
    "build_controller",
    "controller_preset",
    "input_shaping_rlc",
    "input_shaping_srlc",
    "network_input_shaping",
    "output_shaping_rlc",
    "output_shaping_rlc_alt",
    "output_shaping_srlc",
]
