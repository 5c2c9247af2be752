"""Brayton-Moser models of RLC and switched RLC circuits.

Two circuit classes are covered:

* ``RlcSystem``: constant topology driven by voltage sources ``u_s``::

      -L dI/dt = Gamma V + R I - B u_s
       C dV/dt = Gamma^T I - G V

* ``SwitchedRlcSystem``: averaged switched circuit driven by duty cycles ``u``::

      -L dI/dt = R I + Gamma(u) V - B(u) Vs
       C dV/dt = Gamma(u)^T I - G V

  with ``Gamma(u) = Gamma0 + sum_k u_k (Gamma1[k] - Gamma0)`` and the same affine
  rule for ``B(u)``.  A single switch is the ``p = 1`` case; DC networks carry
  one channel per converter.

All matrices are stored dense.  Values are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import (
    DimensionError,
    InvalidSystem,
    MultipleRoots,
    NoFeasibleInput,
    SingularSystem,
)

_SYM_TOL = 1e-12
_PSD_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if name.startswith("B") else np.diag(a)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {a.shape}")
    return a


def _as_stack(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim < 3:
        a = _as_matrix(a, name)[None, :, :]
    if a.ndim != 3:
        raise DimensionError(f"{name} must be a matrix or a stack of matrices")
    return a


def is_spd(M):
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0, atol=_SYM_TOL * max(1.0, np.abs(M).max())):
        return False
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def is_psd(M):
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, np.abs(M).max()) if M.size else 1.0
    if not np.allclose(M, M.T, rtol=0, atol=_SYM_TOL * scale):
        return False
    return bool(M.size == 0 or np.linalg.eigvalsh(0.5 * (M + M.T)).min() >= -_PSD_TOL * scale)


def is_pd(M):
    M = np.asarray(M, dtype=float)
    return M.size > 0 and is_psd(M) and np.linalg.eigvalsh(0.5 * (M + M.T)).min() > _PSD_TOL * max(1.0, np.abs(M).max())


def full_column_rank(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return int(np.linalg.matrix_rank(M)) == M.shape[1]


def _check_storage_and_dissipation(L, C, R, G):
    sigma, rho = L.shape[0], C.shape[0]
    if L.shape != (sigma, sigma) or C.shape != (rho, rho):
        raise DimensionError("L and C must be square")
    if R.shape != (sigma, sigma):
        raise DimensionError(f"R must be {sigma}x{sigma}, got {R.shape}")
    if G.shape != (rho, rho):
        raise DimensionError(f"G must be {rho}x{rho}, got {G.shape}")
    if not is_spd(L):
        raise InvalidSystem("L must be symmetric positive definite")
    if not is_spd(C):
        raise InvalidSystem("C must be symmetric positive definite")
    if not is_psd(R):
        raise InvalidSystem("R must be symmetric positive semidefinite")
    if not is_psd(G):
        raise InvalidSystem("G must be symmetric positive semidefinite")


@dataclass(frozen=True)
class RlcSystem:
    """Constant-topology circuit ``(L, C, R, G, Gamma, B)``; SI units."""

    L: np.ndarray
    C: np.ndarray
    R: np.ndarray
    G: np.ndarray
    Gamma: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        L, C = _as_matrix(self.L, "L"), _as_matrix(self.C, "C")
        R, G = _as_matrix(self.R, "R"), _as_matrix(self.G, "G")
        Gamma, B = _as_matrix(self.Gamma, "Gamma"), _as_matrix(self.B, "B")
        _check_storage_and_dissipation(L, C, R, G)
        sigma, rho = L.shape[0], C.shape[0]
        if Gamma.shape != (sigma, rho):
            raise DimensionError(f"Gamma must be {sigma}x{rho}, got {Gamma.shape}")
        if B.shape[0] != sigma:
            raise DimensionError(f"B must have {sigma} rows, got {B.shape}")
        if not full_column_rank(B):
            raise InvalidSystem("B must have full column rank")
        for name, value in zip(("L", "C", "R", "G", "Gamma", "B"), (L, C, R, G, Gamma, B)):
            object.__setattr__(self, name, _frozen(value))

    @property
    def sigma(self):
        return self.L.shape[0]

    @property
    def rho(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class SwitchedRlcSystem:
    """Averaged switched circuit.

    ``Gamma1`` and ``B1`` may be single matrices (one switch) or stacks with one
    entry per control channel; entry ``k`` is the value of ``Gamma(u)``/``B(u)``
    when channel ``k`` is fully on and all others are off.
    """

    L: np.ndarray
    C: np.ndarray
    R: np.ndarray
    G: np.ndarray
    Gamma0: np.ndarray
    Gamma1: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    Vs: np.ndarray

    def __post_init__(self):
        L, C = _as_matrix(self.L, "L"), _as_matrix(self.C, "C")
        R, G = _as_matrix(self.R, "R"), _as_matrix(self.G, "G")
        _check_storage_and_dissipation(L, C, R, G)
        sigma, rho = L.shape[0], C.shape[0]
        Gamma0 = _as_matrix(self.Gamma0, "Gamma0")
        B0 = _as_matrix(self.B0, "B0")
        Gamma1 = _as_stack(self.Gamma1, "Gamma1")
        B1 = _as_stack(self.B1, "B1")
        Vs = np.atleast_1d(np.asarray(self.Vs, dtype=float))
        if Vs.ndim != 1:
            raise DimensionError("Vs must be a vector")
        p = max(Gamma1.shape[0], B1.shape[0])
        if Gamma1.shape[0] == 1 and p > 1:
            Gamma1 = np.repeat(Gamma1, p, axis=0)
        if B1.shape[0] == 1 and p > 1:
            B1 = np.repeat(B1, p, axis=0)
        if Gamma1.shape[0] != B1.shape[0]:
            raise DimensionError("Gamma1 and B1 must list the same number of channels")
        if Gamma0.shape != (sigma, rho) or Gamma1.shape[1:] != (sigma, rho):
            raise DimensionError(f"Gamma0/Gamma1 must be {sigma}x{rho}")
        m = Vs.shape[0]
        if B0.shape != (sigma, m) or B1.shape[1:] != (sigma, m):
            raise DimensionError(f"B0/B1 must be {sigma}x{m} to match Vs")
        if np.any(Vs == 0):
            raise InvalidSystem("every source voltage must be nonzero")
        for name, value in zip(
            ("L", "C", "R", "G", "Gamma0", "Gamma1", "B0", "B1", "Vs"),
            (L, C, R, G, Gamma0, Gamma1, B0, B1, Vs),
        ):
            object.__setattr__(self, name, _frozen(value))

    @property
    def sigma(self):
        return self.L.shape[0]

    @property
    def rho(self):
        return self.C.shape[0]

    @property
    def n_channels(self):
        return self.Gamma1.shape[0]

    @property
    def dGamma(self):
        """Per-channel ``Gamma1[k] - Gamma0``, shape ``(p, sigma, rho)``."""
        return self.Gamma1 - self.Gamma0[None]

    @property
    def dB(self):
        return self.B1 - self.B0[None]

    def with_conductance(self, G):
        return SwitchedRlcSystem(self.L, self.C, self.R, G, self.Gamma0, self.Gamma1, self.B0, self.B1, self.Vs)


System = Union[RlcSystem, SwitchedRlcSystem]


@dataclass(frozen=True)
class CircuitState:
    I: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        I = np.atleast_1d(np.asarray(self.I, dtype=float)).ravel()
        V = np.atleast_1d(np.asarray(self.V, dtype=float)).ravel()
        if not (np.all(np.isfinite(I)) and np.all(np.isfinite(V))):
            raise ValueError("circuit state must be finite")
        object.__setattr__(self, "I", _frozen(I))
        object.__setattr__(self, "V", _frozen(V))


@dataclass(frozen=True)
class ExtendedState:
    """State of the differentially extended system ``(I, V, dI, dV, u)``.

    The derivative of an extended state is returned in the same container:
    ``state`` holds ``(dI, dV)``, ``dI``/``dV`` the second derivatives and
    ``u`` the input rate.
    """

    state: CircuitState
    dI: np.ndarray
    dV: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dI", _frozen(np.atleast_1d(np.asarray(self.dI, dtype=float)).ravel()))
        object.__setattr__(self, "dV", _frozen(np.atleast_1d(np.asarray(self.dV, dtype=float)).ravel()))
        object.__setattr__(self, "u", _frozen(np.atleast_1d(np.asarray(self.u, dtype=float)).ravel()))

    @property
    def I(self):
        return self.state.I

    @property
    def V(self):
        return self.state.V


@dataclass(frozen=True)
class Setpoint:
    Vstar: np.ndarray
    Ibar: np.ndarray
    ubar: np.ndarray

    def __post_init__(self):
        for name in ("Vstar", "Ibar", "ubar"):
            object.__setattr__(self, name, _frozen(np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).ravel()))


def _check_state(sys, s):
    if s.I.shape != (sys.sigma,) or s.V.shape != (sys.rho,):
        raise DimensionError(
            f"state sizes ({s.I.size}, {s.V.size}) do not match circuit ({sys.sigma}, {sys.rho})"
        )


def _duty(sys, u):
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    if u.shape != (sys.n_channels,):
        raise DimensionError(f"expected {sys.n_channels} duty value(s), got {u.size}")
    return u


def _source(sys, u_s):
    u_s = np.atleast_1d(np.asarray(u_s, dtype=float)).ravel()
    if u_s.shape != (sys.m,):
        raise DimensionError(f"expected {sys.m} source value(s), got {u_s.size}")
    return u_s


def interconnection(sys, u=None):
    """``Gamma(u)``; constant for an ``RlcSystem``."""
    if isinstance(sys, RlcSystem):
        return sys.Gamma
    u = _duty(sys, u)
    return sys.Gamma0 + np.tensordot(u, sys.dGamma, axes=1)


def input_matrix(sys, u=None):
    if isinstance(sys, RlcSystem):
        return sys.B
    u = _duty(sys, u)
    return sys.B0 + np.tensordot(u, sys.dB, axes=1)


def mixed_potential(sys, u, s):
    """``I^T Gamma(u) V + 1/2 I^T R I - 1/2 V^T G V`` in watts."""
    _check_state(sys, s)
    Gamma = interconnection(sys, u)
    I, V = s.I, s.V
    return float(I @ Gamma @ V + 0.5 * I @ sys.R @ I - 0.5 * V @ sys.G @ V)


def grad_mixed_potential(sys, u, s):
    _check_state(sys, s)
    Gamma = interconnection(sys, u)
    return Gamma @ s.V + sys.R @ s.I, Gamma.T @ s.I - sys.G @ s.V


def rlc_dynamics(sys, s, u_s):
    """Return ``(dI, dV)`` of a constant-topology circuit."""
    _check_state(sys, s)
    u_s = _source(sys, u_s)
    dI = -np.linalg.solve(sys.L, sys.Gamma @ s.V + sys.R @ s.I - sys.B @ u_s)
    dV = np.linalg.solve(sys.C, sys.Gamma.T @ s.I - sys.G @ s.V)
    return dI, dV


def srlc_dynamics(sys, s, u):
    _check_state(sys, s)
    Gamma = interconnection(sys, u)
    Bu = input_matrix(sys, u)
    dI = -np.linalg.solve(sys.L, sys.R @ s.I + Gamma @ s.V - Bu @ sys.Vs)
    dV = np.linalg.solve(sys.C, Gamma.T @ s.I - sys.G @ s.V)
    return dI, dV


def extended_rlc_dynamics(sys, e, upsilon_s):
    """Time derivative of the extended state; ``upsilon_s`` is ``du_s/dt``."""
    upsilon_s = _source(sys, upsilon_s)
    dI, dV = rlc_dynamics(sys, e.state, e.u)
    ddI = -np.linalg.solve(sys.L, sys.Gamma @ e.dV + sys.R @ e.dI - sys.B @ upsilon_s)
    ddV = np.linalg.solve(sys.C, sys.Gamma.T @ e.dI - sys.G @ e.dV)
    return ExtendedState(CircuitState(dI, dV), ddI, ddV, upsilon_s)


def extended_srlc_dynamics(sys, e, upsilon):
    upsilon = _duty(sys, upsilon)
    dI, dV = srlc_dynamics(sys, e.state, e.u)
    Gamma = interconnection(sys, e.u)
    I, V = e.I, e.V
    # column k is the duty-sensitivity of channel k
    drive_I = np.einsum("kij,j->ik", sys.dGamma, V) - np.einsum("kij,j->ik", sys.dB, sys.Vs)
    drive_V = np.einsum("kij,i->jk", sys.dGamma, I)
    ddI = -np.linalg.solve(sys.L, sys.R @ e.dI + Gamma @ e.dV + drive_I @ upsilon)
    ddV = np.linalg.solve(sys.C, Gamma.T @ e.dI + drive_V @ upsilon - sys.G @ e.dV)
    return ExtendedState(CircuitState(dI, dV), ddI, ddV, upsilon)


def energy_storage(sys, s):
    """Total stored energy ``1/2 I^T L I + 1/2 V^T C V`` (joule)."""
    _check_state(sys, s)
    return float(0.5 * s.I @ sys.L @ s.I + 0.5 * s.V @ sys.C @ s.V)


def krasovskii_storage(sys, dI, dV):
    """Storage built from state derivatives: ``1/2 |dI|_L^2 + 1/2 |dV|_C^2``."""
    dI = np.atleast_1d(np.asarray(dI, dtype=float))
    dV = np.atleast_1d(np.asarray(dV, dtype=float))
    return float(0.5 * dI @ sys.L @ dI + 0.5 * dV @ sys.C @ dV)


def rlc_output(sys, dI):
    return sys.B.T @ np.atleast_1d(np.asarray(dI, dtype=float))


def srlc_output(sys, s, dI, dV):
    """Per-channel output conjugate to the duty rate.

    ``y_k = dV^T dGamma_k^T I - dI^T dGamma_k V + dI^T dB_k Vs``
    """
    _check_state(sys, s)
    dI = np.atleast_1d(np.asarray(dI, dtype=float))
    dV = np.atleast_1d(np.asarray(dV, dtype=float))
    return (
        np.einsum("kij,i,j->k", sys.dGamma, s.I, dV)
        - np.einsum("kij,i,j->k", sys.dGamma, dI, s.V)
        + np.einsum("kij,i,j->k", sys.dB, dI, sys.Vs)
    )


def controllability_vector(sys, s):
    """Columns ``[dGamma_k V - dB_k Vs; dGamma_k^T I]`` stacked as ``(p, sigma + rho)``."""
    _check_state(sys, s)
    top = np.einsum("kij,j->ki", sys.dGamma, s.V) - np.einsum("kij,j->ki", sys.dB, sys.Vs)
    bottom = np.einsum("kij,i->kj", sys.dGamma, s.I)
    return np.concatenate([top, bottom], axis=1)


def equilibrium_matrix(sys, u=None):
    Gamma = interconnection(sys, u)
    return np.block([[sys.R, Gamma], [Gamma.T, -sys.G]])


def _solve_equilibrium(A, rhs, sigma):
    n = A.shape[0]
    if np.linalg.matrix_rank(A) < n:
        raise SingularSystem("equilibrium matrix [[R, Gamma], [Gamma^T, -G]] is rank deficient")
    z = np.linalg.solve(A, rhs)
    # one round of iterative refinement keeps the residual at roundoff level
    z = z + np.linalg.solve(A, rhs - A @ z)
    return CircuitState(z[:sigma], z[sigma:])


def rlc_steady_state(sys, u_s):
    u_s = _source(sys, u_s)
    rhs = np.concatenate([sys.B @ u_s, np.zeros(sys.rho)])
    return _solve_equilibrium(equilibrium_matrix(sys), rhs, sys.sigma)


def srlc_steady_state(sys, u):
    u = _duty(sys, u)
    rhs = np.concatenate([input_matrix(sys, u) @ sys.Vs, np.zeros(sys.rho)])
    return _solve_equilibrium(equilibrium_matrix(sys, u), rhs, sys.sigma)


def srlc_feasible_input(sys, vstar, output=-1, delta=1e-6, samples=2001):
    """Duty cycle in ``(0, 1)`` whose steady state puts ``V[output]`` at ``vstar``.

    The interval ``(delta, 1 - delta)`` is scanned for sign changes of
    ``V(u)[output] - vstar``; a single bracket is refined with Brent's method and
    polished by Newton steps.
    """
    from scipy.optimize import brentq

    if sys.n_channels != 1:
        raise DimensionError("srlc_feasible_input handles single-switch circuits only")
    vstar = float(vstar)

    def g(u):
        try:
            return srlc_steady_state(sys, [u]).V[output] - vstar
        except SingularSystem:
            return np.nan

    grid = np.linspace(delta, 1.0 - delta, samples)
    values = np.array([g(u) for u in grid])
    brackets = []
    for k in range(samples - 1):
        a, b = values[k], values[k + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0.0:
            brackets.append((grid[k], grid[k]))
        elif a * b < 0:
            brackets.append((grid[k], grid[k + 1]))
    if values[-1] == 0.0:
        brackets.append((grid[-1], grid[-1]))
    if not brackets:
        raise NoFeasibleInput(f"no duty cycle in (0, 1) reaches V = {vstar:g}")
    if len(brackets) > 1:
        raise MultipleRoots(f"{len(brackets)} duty cycles reach V = {vstar:g}", [0.5 * (a + b) for a, b in brackets])
    a, b = brackets[0]
    u = a if a == b else brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    tol = 1e-9 * max(abs(vstar), 1.0)
    for _ in range(5):
        r = g(u)
        if abs(r) <= 0.01 * tol:
            break
        h = 1e-7 * max(u, 1e-3)
        slope = (g(u + h) - g(u - h)) / (2 * h)
        if not np.isfinite(slope) or slope == 0:
            break
        cand = u - r / slope
        if not (a <= cand <= b) or abs(g(cand)) >= abs(r):
            break
        u = cand
    eq = srlc_steady_state(sys, [u])
    if abs(eq.V[output] - vstar) > tol:
        raise NoFeasibleInput(f"root refinement failed to reach tolerance for V = {vstar:g}")
    return Setpoint(eq.V, eq.I, [u])


@dataclass
class AssumptionReport:
    L_spd: bool
    C_spd: bool
    R_psd: bool
    G_psd: bool
    R_pd: bool
    G_pd: bool
    B_full_rank: bool
    gamma_full_column_rank: bool
    gamma_t_full_column_rank: bool
    equilibrium_nonsingular: bool
    cases: list
    output_shaping_cases: list
    controllability: list = field(default_factory=list)
    controllability_scope: str = "sampled only"

    @property
    def controllability_ok(self):
        return all(ok for _, ok in self.controllability)

    def failures(self):
        names = ("L_spd", "C_spd", "R_psd", "G_psd", "B_full_rank")
        out = [n for n in names if not getattr(self, n)]
        if not self.cases:
            out.append("no stability case applies")
        if not self.controllability_ok:
            out.append("controllability condition fails at a sample")
        return out


def verify_assumptions(sys, samples: Sequence[CircuitState] = (), duties=None, ubar=None):
    """Evaluate the structural hypotheses of the passivity and stability results.

    Rank conditions on ``Gamma(u)`` are checked at every duty in ``duties``
    (default: 11 points on [0, 1] for one switch, {0, 1/2, 1} per channel
    otherwise) and must hold at all of them.  The controllability condition is
    only evaluated pointwise at ``samples``; a global claim cannot be checked
    numerically and the report says so.
    """
    switched = isinstance(sys, SwitchedRlcSystem)
    R_pd, G_pd = is_pd(sys.R), is_pd(sys.G)
    if switched:
        p = sys.n_channels
        if duties is None:
            duties = [np.full(p, x) for x in (np.linspace(0, 1, 11) if p == 1 else (0.0, 0.5, 1.0))]
        gammas = [interconnection(sys, u) for u in duties]
        B_ok = all(full_column_rank(input_matrix(sys, u)) or not np.any(input_matrix(sys, u)) for u in duties)
        eq_at = ubar if ubar is not None else np.full(p, 0.5)
        A = equilibrium_matrix(sys, eq_at)
    else:
        gammas = [sys.Gamma]
        B_ok = full_column_rank(sys.B)
        A = equilibrium_matrix(sys)
    g_rank = all(full_column_rank(Gm) for Gm in gammas)
    gt_rank = all(full_column_rank(Gm.T) for Gm in gammas)
    cases = []
    if R_pd and G_pd:
        cases.append("b-i")
    if R_pd and g_rank:
        cases.append("b-ii")
    if G_pd and gt_rank:
        cases.append("b-iii")
    os_cases = []
    if R_pd and G_pd:
        os_cases.append("b-i")
    if G_pd and gt_rank:
        os_cases.append("b-ii")
    controllability = []
    if switched:
        for s in samples:
            vec = controllability_vector(sys, s)
            controllability.append((s, bool(np.all(np.any(vec != 0, axis=1)))))
    return AssumptionReport(
        L_spd=is_spd(sys.L),
        C_spd=is_spd(sys.C),
        R_psd=is_psd(sys.R),
        G_psd=is_psd(sys.G),
        R_pd=R_pd,
        G_pd=G_pd,
        B_full_rank=B_ok,
        gamma_full_column_rank=g_rank,
        gamma_t_full_column_rank=gt_rank,
        equilibrium_nonsingular=bool(np.linalg.matrix_rank(A) == A.shape[0]),
        cases=cases,
        output_shaping_cases=os_cases,
        controllability=controllability,
    )
