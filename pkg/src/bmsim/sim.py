"""Closed-loop simulation, load events, trajectory records and numerical audits.

The plant and the controller state are integrated as one ODE on the uniform
grid ``t_k = k dt``.  Load steps split the run into segments; each segment is
integrated with the parameters active on it and audited separately.

Supply and dissipation integrals are accumulated on the fine grid with the
trapezoidal rule, so audits remain exact per recorded interval when only every
``record_every``-th step is stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernel
from .core import (
    CircuitState,
    ExtendedState,
    RlcSystem,
    SwitchedRlcSystem,
    is_psd,
    rlc_dynamics,
    srlc_dynamics,
)
from .errors import EventOffGrid, InvalidParams, InvalidTarget, NonFiniteState, NonPsdResult, SchemaMismatch

PASSIVITY_REL = 1e-6
IDENTITY_REL = 1e-5
STRICT_DAMPING = 1e-6
_GRID_TOL = 1e-9


@dataclass(frozen=True)
class LoadStep:
    """Conductance change ``G[index, index] += delta`` at ``time``.

    ``index`` addresses the voltage vector; ``None`` means the last capacitor,
    which is the load of every single converter.
    """

    time: float
    delta: float
    index: Optional[int] = None
    target: str = "G"


def apply_event(sys, change: LoadStep):
    if change.target != "G":
        raise InvalidTarget(f"load steps can only change G, not {change.target!r}")
    rho = sys.rho
    i = rho - 1 if change.index is None else int(change.index)
    if not 0 <= i < rho:
        raise InvalidTarget(f"conductance index {i} outside 0..{rho - 1}")
    if change.delta == 0:
        return sys
    G = np.array(sys.G)
    G[i, i] += change.delta
    if not is_psd(G):
        raise NonPsdResult(f"conductance {G[i, i]:g} S at index {i} is negative")
    if isinstance(sys, RlcSystem):
        return RlcSystem(sys.L, sys.C, sys.R, G, sys.Gamma, sys.B)
    return sys.with_conductance(G)


def initial_state(sys, I, V, u):
    """Extended state with derivatives consistent with the circuit equations."""
    s = CircuitState(I, V)
    if isinstance(sys, RlcSystem):
        dI, dV = rlc_dynamics(sys, s, u)
    else:
        dI, dV = srlc_dynamics(sys, s, u)
    return ExtendedState(s, dI, dV, u)


@dataclass(frozen=True)
class SegmentTarget:
    """Voltage the audit expects at the end of a segment, for the ``outputs`` entries."""

    vstar: np.ndarray
    band: float


@dataclass(frozen=True)
class Scenario:
    system: object
    controller: object
    t_end: float
    dt: float
    initial: ExtendedState
    events: Sequence[LoadStep] = ()
    record_every: int = 1
    method: str = "rk4"
    saturate: bool = False
    outputs: Optional[Sequence[int]] = None
    band: float = 0.5
    expect: Optional[Sequence[SegmentTarget]] = None
    name: str = "scenario"
    shift_note: bool = False

    def __post_init__(self):
        if not (self.dt > 0):
            raise InvalidParams("dt must be positive")
        if not (self.t_end > self.dt):
            raise InvalidParams("t_end must exceed dt")
        if self.method not in ("rk4", "radau"):
            raise InvalidParams("method must be 'rk4' or 'radau'")
        if int(self.record_every) < 1:
            raise InvalidParams("record_every must be >= 1")
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.time)))
        for ev in self.events:
            if not (0 <= ev.time <= self.t_end):
                raise InvalidParams(f"event at t={ev.time} outside [0, t_end]")

    @property
    def setpoint(self):
        return self.controller.setpoint

    @property
    def n_steps(self):
        return _grid_index(self.t_end, self.dt, "t_end")

    def event_groups(self):
        """Events grouped by grid step; simultaneous load steps start one segment."""
        groups = {}
        for ev in self.events:
            groups.setdefault(_grid_index(ev.time, self.dt, f"event time {ev.time!r}"), []).append(ev)
        return sorted(groups.items())

    @property
    def n_segments(self):
        return len(self.event_groups()) + 1

    def segment_systems(self):
        systems = [self.system]
        for _, evs in self.event_groups():
            sys = systems[-1]
            for ev in evs:
                sys = apply_event(sys, ev)
            systems.append(sys)
        return systems

    def output_indices(self):
        rho = self.system.rho
        return list(range(rho)) if self.outputs is None else [int(i) for i in self.outputs]

    def segment_targets(self):
        n = self.n_segments
        if self.expect is not None:
            if len(self.expect) != n:
                raise InvalidParams(f"expect lists {len(self.expect)} targets for {n} segments")
            return list(self.expect)
        idx = self.output_indices()
        return [SegmentTarget(np.asarray(self.setpoint.Vstar)[idx], self.band)] * n


def _grid_index(t, dt, what):
    k = round(t / dt)
    if abs(k * dt - t) > _GRID_TOL * max(dt, abs(t)) and abs(k - t / dt) > _GRID_TOL * max(1.0, abs(t / dt)):
        raise EventOffGrid(f"{what} = {t!r} is not a multiple of dt = {dt!r}")
    return int(k)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    I: np.ndarray
    V: np.ndarray
    u: np.ndarray
    dI: np.ndarray
    dV: np.ndarray
    S: np.ndarray
    S_d: np.ndarray
    supply: np.ndarray
    upsilon: np.ndarray
    supply_step: np.ndarray
    dissipation_step: np.ndarray
    segment: np.ndarray
    saturation_times: tuple = ()

    def __post_init__(self):
        for name in ("t", "I", "V", "u", "dI", "dV", "S", "S_d", "supply", "upsilon",
                     "supply_step", "dissipation_step", "segment"):
            a = np.array(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.t.shape[0]

    @property
    def event_rows(self):
        """Indices of the first row of every segment after the first."""
        return np.nonzero(np.diff(self.segment) != 0)[0] + 1

    def segment_slice(self, j):
        idx = np.nonzero(self.segment == j)[0]
        return slice(idx[0], idx[-1] + 1)


def kernel_plant(sys):
    """Affine plant arrays consumed by the compiled integrator."""
    if isinstance(sys, RlcSystem):
        m = sys.m
        gamma0 = sys.Gamma
        dgamma = np.zeros((m, sys.sigma, sys.rho))
        b0 = np.zeros(sys.sigma)
        db = np.ascontiguousarray(sys.B.T)
    else:
        gamma0 = sys.Gamma0
        dgamma = sys.dGamma
        b0 = sys.B0 @ sys.Vs
        db = np.einsum("kij,j->ki", sys.dB, sys.Vs)
    return (
        int(sys.sigma), int(sys.rho),
        np.ascontiguousarray(np.linalg.inv(sys.L)), np.ascontiguousarray(np.linalg.inv(sys.C)),
        np.ascontiguousarray(sys.R), np.ascontiguousarray(sys.G),
        np.ascontiguousarray(gamma0), np.ascontiguousarray(dgamma),
        np.ascontiguousarray(b0, dtype=float), np.ascontiguousarray(db, dtype=float),
    )


def _storage_rows(sys, dI, dV):
    return 0.5 * np.einsum("ni,ij,nj->n", dI, sys.L, dI) + 0.5 * np.einsum("ni,ij,nj->n", dV, sys.C, dV)


def integrate(sc: Scenario) -> Trajectory:
    """Run the scenario; identical inputs give bit-identical trajectories."""
    dt = float(sc.dt)
    n_total = sc.n_steps
    bounds = [0] + [k for k, _ in sc.event_groups()] + [n_total]
    if len(bounds) > 2 and bounds[-2] == n_total:
        raise EventOffGrid("an event at t_end would start an empty segment")
    if len(bounds) > 2 and bounds[1] == 0:
        raise EventOffGrid("events at t = 0 belong in the initial system")
    systems = sc.segment_systems()
    sys0 = sc.system
    ctrl = sc.controller
    kargs = ctrl.kernel_args(sys0)
    p = kargs[1].shape[0]
    x0 = ctrl.initial_controller_state(sys0, sc.initial.u, sc.initial.I)
    z = np.ascontiguousarray(np.concatenate([sc.initial.I, sc.initial.V, x0]).astype(float))
    stride = int(sc.record_every)
    method = _kernel.METHOD_RK4 if sc.method == "rk4" else _kernel.METHOD_RADAU
    off = sys0.sigma + sys0.rho
    parts = []
    sat_all = []
    for j, sys in enumerate(systems):
        k0, k1 = bounds[j], bounds[j + 1]
        span = k1 - k0
        nrec = span // stride + 1 + (1 if span % stride else 0)
        rec = dict(
            t=np.empty(nrec), z=np.empty((nrec, z.size)), u=np.empty((nrec, p)), dz=np.empty((nrec, off)),
            ups=np.empty((nrec, p)), sup=np.empty(nrec), sup_step=np.empty(nrec), diss_step=np.empty(nrec),
        )
        sat_times = np.zeros(256)
        status, k_fail, got, n_sat, z = _kernel.run_segment(
            z, k0, k1, dt, stride, method, *kernel_plant(sys), *kargs, bool(sc.saturate),
            rec["t"], rec["z"], rec["u"], rec["dz"], rec["ups"], rec["sup"], rec["sup_step"], rec["diss_step"],
            sat_times,
        )
        if status == _kernel.STATUS_NONFINITE:
            raise NonFiniteState(f"state became non-finite at t = {k_fail * dt:.6g} s", time=k_fail * dt)
        if status == _kernel.STATUS_NEWTON:
            raise NonFiniteState(f"implicit step failed to converge at t = {k_fail * dt:.6g} s", time=k_fail * dt)
        sat_all.extend(sat_times[: min(n_sat, sat_times.size)].tolist())
        parts.append((j, rec))
    return _assemble_trajectory(sys0, ctrl, parts, sat_all)


def _assemble_trajectory(sys, ctrl, parts, sat_times):
    sigma, rho = sys.sigma, sys.rho
    t = np.concatenate([r["t"] for _, r in parts])
    zz = np.concatenate([r["z"] for _, r in parts])
    dz = np.concatenate([r["dz"] for _, r in parts])
    u = np.concatenate([r["u"] for _, r in parts])
    I, V = zz[:, :sigma], zz[:, sigma:sigma + rho]
    dI, dV = dz[:, :sigma], dz[:, sigma:]
    S = _storage_rows(sys, dI, dV)
    S_d = S + ctrl.shaping_term(sys, I, V, u)
    return Trajectory(
        t=t, I=I, V=V, u=u, dI=dI, dV=dV, S=S, S_d=S_d,
        supply=np.concatenate([r["sup"] for _, r in parts]),
        upsilon=np.concatenate([r["ups"] for _, r in parts]),
        supply_step=np.concatenate([r["sup_step"] for _, r in parts]),
        dissipation_step=np.concatenate([r["diss_step"] for _, r in parts]),
        segment=np.concatenate([np.full(r["t"].size, j) for j, r in parts]),
        saturation_times=tuple(sat_times),
    )


def rk4_solve(f, x0, dt, n_steps, t0=0.0):
    """Classical fixed-step RK4 for a generic ``f(t, x)``; returns the state at every step."""
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for k in range(n_steps):
        t = t0 + k * dt
        k1 = f(t, x)
        k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = x
    return out


# Audits


@dataclass
class Violation:
    time: float
    amount: float
    kind: str

    def __str__(self):
        return f"t={self.time:.9g} s {self.kind} excess {self.amount:.6g}"


@dataclass
class SegmentConvergence:
    segment: int
    start: float
    target: np.ndarray
    band: float
    converged: bool
    time: Optional[float]
    final_error: float


@dataclass
class AuditReport:
    max_passivity_violation: float = 0.0
    max_identity_residual: float = 0.0
    max_lyapunov_increase: float = 0.0
    passivity_violations: list = field(default_factory=list)
    identity_violations: list = field(default_factory=list)
    lyapunov_violations: list = field(default_factory=list)
    strict_decrease: list = field(default_factory=list)
    damping_rate: list = field(default_factory=list)
    convergence: list = field(default_factory=list)
    saturation_events: list = field(default_factory=list)
    assumption_violations: list = field(default_factory=list)
    condition_violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def n_violations(self):
        return len(self.passivity_violations) + len(self.identity_violations) + len(self.lyapunov_violations)

    @property
    def audits_pass(self):
        return self.n_violations == 0 and not self.strict_decrease_lost

    @property
    def strict_decrease_lost(self):
        return any(not ok for ok in self.strict_decrease)

    @property
    def converged(self):
        return all(c.converged for c in self.convergence)

    def merge(self, other):
        for f in ("passivity_violations", "identity_violations", "lyapunov_violations", "strict_decrease",
                  "damping_rate", "convergence", "saturation_events", "assumption_violations", "condition_violations", "notes"):
            getattr(self, f).extend(getattr(other, f))
        self.max_passivity_violation = max(self.max_passivity_violation, other.max_passivity_violation)
        self.max_identity_residual = max(self.max_identity_residual, other.max_identity_residual)
        self.max_lyapunov_increase = max(self.max_lyapunov_increase, other.max_lyapunov_increase)
        return self

    def exit_code(self):
        if not self.audits_pass:
            return 2
        if not self.converged:
            return 3
        return 0

    def format(self, limit=20):
        lines = [f"{self.n_violations} violations"]
        lines.append(f"max passivity violation: {self.max_passivity_violation:.6g}")
        lines.append(f"max dissipation-identity residual: {self.max_identity_residual:.6g}")
        lines.append(f"max shaped-storage increase: {self.max_lyapunov_increase:.6g}")
        for label, items in (("passivity", self.passivity_violations), ("identity", self.identity_violations),
                             ("lyapunov", self.lyapunov_violations)):
            for v in items[:limit]:
                lines.append(f"  {label}: {v}")
            if len(items) > limit:
                lines.append(f"  {label}: ... {len(items) - limit} more")
        for j, (ok, rate) in enumerate(zip(self.strict_decrease, self.damping_rate)):
            state = "strictly decreasing" if ok else "NO STRICT DECREASE (no circuit dissipation)"
            shown = "at rest" if math.isinf(rate) else f"{rate:.3g} 1/s"
            lines.append(f"segment {j}: shaped storage {state}; circuit damping rate {shown}")
        for c in self.convergence:
            tgt = ", ".join(f"{x:.6g}" for x in np.atleast_1d(c.target))
            when = "never" if c.time is None else f"t={c.time:.6g} s ({c.time - c.start:.6g} s after segment start)"
            lines.append(
                f"segment {c.segment}: target [{tgt}] +/- {c.band:g} V: "
                f"{'converged' if c.converged else 'NOT converged'} {when}; final error {c.final_error:.6g} V"
            )
        if self.saturation_events:
            lines.append(f"duty at or beyond [0, 1]: {len(self.saturation_events)} entries (first at t={self.saturation_events[0]:.6g} s)")
        for label, items in (("controllability condition", self.assumption_violations),
                             ("integrating-factor condition", self.condition_violations)):
            if items:
                lines.append(f"warning: {label} fails at {len(items)} samples, first at t={items[0]:.6g} s")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _pairs(traj):
    same = (traj.segment[1:] == traj.segment[:-1]) & (traj.t[1:] > traj.t[:-1])
    return np.nonzero(same)[0]


def _affine_parts(sys):
    if isinstance(sys, RlcSystem):
        return sys.Gamma, np.zeros((sys.m, sys.sigma, sys.rho)), np.ascontiguousarray(sys.B.T)
    return sys.Gamma0, sys.dGamma, np.einsum("kij,j->ki", sys.dB, sys.Vs)


def identity_terms(sys, I, V, u, dI, dV, ups):
    """Row-wise ``dS/dt`` from the extended dynamics, the dissipation and a magnitude scale.

    ``dS/dt = dI^T L ddI + dV^T C ddV`` with the second derivatives taken from
    the extended circuit equations; no matrix inverse is needed.
    """
    gamma0, dgamma, db = _affine_parts(sys)
    gam = gamma0[None] + np.einsum("nk,kij->nij", u, dgamma)
    drive_I = np.einsum("nk,kij,nj->ni", ups, dgamma, V) - ups @ db
    drive_V = np.einsum("nk,kij,ni->nj", ups, dgamma, I)
    parts_I = [dI @ sys.R.T, np.einsum("nij,nj->ni", gam, dV), drive_I]
    parts_V = [np.einsum("nij,ni->nj", gam, dI), drive_V, -(dV @ sys.G.T)]
    dSdt = -np.einsum("ni,ni->n", dI, sum(parts_I)) + np.einsum("nj,nj->n", dV, sum(parts_V))
    diss = np.einsum("ni,ij,nj->n", dI, sys.R, dI) + np.einsum("ni,ij,nj->n", dV, sys.G, dV)
    scale = sum(np.einsum("ni,ni->n", np.abs(dI), np.abs(x)) for x in parts_I)
    scale = scale + sum(np.einsum("nj,nj->n", np.abs(dV), np.abs(x)) for x in parts_V)
    return dSdt, diss, scale


def _segment_systems(traj, sys):
    if isinstance(sys, (list, tuple)):
        return list(sys)
    return [sys] * (int(np.max(traj.segment)) + 1 if len(traj) else 1)


def passivity_audit(traj: Trajectory, sys) -> AuditReport:
    """Check ``dS <= integral of supply`` per recorded interval and the dissipation identity per row.

    ``S`` is recomputed from the derivative columns, so a corrupted column shows
    up as a violation.  ``sys`` is one circuit or a list with one circuit per
    segment (load steps change the dissipation).
    """
    rep = AuditReport()
    if len(traj) == 0:
        return rep
    systems = _segment_systems(traj, sys)
    dI, dV = np.asarray(traj.dI), np.asarray(traj.dV)
    S = _storage_rows(systems[0], dI, dV)
    i = _pairs(traj)
    if i.size:
        dS = S[i + 1] - S[i]
        sup = traj.supply_step[i + 1]
        eps = PASSIVITY_REL * np.maximum(1.0, np.maximum(np.abs(S[i]), np.abs(S[i + 1])))
        excess = dS - sup
        rep.max_passivity_violation = float(max(0.0, np.max(excess)))
        bad = np.nonzero(~(excess <= eps))[0]
        rep.passivity_violations = [
            Violation(float(traj.t[i[b] + 1]), float(excess[b]), "storage increase over supply") for b in bad
        ]
    resid = np.zeros(len(traj))
    tol = np.zeros(len(traj))
    for j, seg_sys in enumerate(systems):
        rows = traj.segment == j
        if not np.any(rows):
            continue
        dSdt, diss, scale = identity_terms(
            seg_sys, np.asarray(traj.I)[rows], np.asarray(traj.V)[rows], np.asarray(traj.u)[rows],
            dI[rows], dV[rows], np.asarray(traj.upsilon)[rows],
        )
        rhs = -diss + traj.supply[rows]
        resid[rows] = np.abs(dSdt - rhs)
        tol[rows] = IDENTITY_REL * (np.abs(dSdt) + np.abs(diss) + np.abs(traj.supply[rows])) + 1e-12 * scale + 1e-300
    rel = resid / np.maximum(tol / IDENTITY_REL, 1e-300)
    rep.max_identity_residual = float(np.max(rel))
    bad = np.nonzero(~(resid <= tol))[0]
    rep.identity_violations = [Violation(float(traj.t[b]), float(rel[b]), "dissipation identity (relative)") for b in bad]
    return rep


def shaped_storage_rows(traj, controller, sys):
    S = _storage_rows(sys, np.asarray(traj.dI), np.asarray(traj.dV))
    return S + controller.shaping_term(sys, np.asarray(traj.I), np.asarray(traj.V), np.asarray(traj.u))


def lyapunov_audit(traj: Trajectory, controller, sys, targets=None, outputs=None) -> AuditReport:
    """Shaped-storage monotonicity, strict decrease and voltage convergence per segment.

    Strict decrease needs the circuit itself to dissipate the motion energy
    ``S``.  Per segment the audit measures the circuit damping rate
    ``kappa = (integral of dI^T R dI + dV^T G dV) / (integral of S)``; a segment
    counts as strictly decreasing when ``kappa * duration >= STRICT_DAMPING`` or
    the circuit is at rest.  Lossless lines without loads give ``kappa = 0``:
    only the controller damps the motion and the state may settle away from
    the setpoint.
    """
    rep = AuditReport()
    Sd = shaped_storage_rows(traj, controller, sys)
    S = _storage_rows(sys, np.asarray(traj.dI), np.asarray(traj.dV))
    i = _pairs(traj)
    if i.size:
        inc = Sd[i + 1] - Sd[i]
        eps = PASSIVITY_REL * np.maximum(1.0, np.maximum(np.abs(Sd[i]), np.abs(Sd[i + 1])))
        rep.max_lyapunov_increase = float(max(0.0, np.max(inc)))
        bad = np.nonzero(~(inc <= eps))[0]
        rep.lyapunov_violations = [Violation(float(traj.t[i[b] + 1]), float(inc[b]), "shaped storage increase") for b in bad]
    outputs = list(range(traj.V.shape[1])) if outputs is None else list(outputs)
    for j in np.unique(traj.segment):
        sl = traj.segment_slice(int(j))
        t = traj.t[sl]
        duration = float(t[-1] - t[0])
        motion = float(np.sum(0.5 * (S[sl][1:] + S[sl][:-1]) * np.diff(t)))
        damped = float(np.sum(traj.dissipation_step[sl][1:]))
        at_rest = motion <= 1e-12 * max(1.0, duration)
        rate = math.inf if at_rest else damped / motion
        rep.damping_rate.append(rate)
        rep.strict_decrease.append(bool(at_rest or rate * duration >= STRICT_DAMPING))
        if targets is not None:
            tgt = targets[int(j)]
            err = np.max(np.abs(traj.V[sl][:, outputs] - np.asarray(tgt.vstar)), axis=1)
            inside = err <= tgt.band
            when = None
            if inside[-1]:
                k = inside.size - 1
                while k > 0 and inside[k - 1]:
                    k -= 1
                when = float(t[k])
            rep.convergence.append(
                SegmentConvergence(int(j), float(t[0]), np.asarray(tgt.vstar), tgt.band, bool(inside[-1]), when, float(err[-1]))
            )
    return rep


def condition_audit(traj: Trajectory, sys, controller) -> AuditReport:
    """Pointwise controllability and integrating-factor conditions along the run."""
    rep = AuditReport()
    if not isinstance(sys, SwitchedRlcSystem):
        return rep
    I, V = np.asarray(traj.I), np.asarray(traj.V)
    top = np.einsum("kij,nj->nki", sys.dGamma, V) - np.einsum("kij,j->ki", sys.dB, sys.Vs)[None]
    bottom = np.einsum("kij,ni->nkj", sys.dGamma, I)
    scale = max(1.0, float(np.max(np.abs(V))), float(np.max(np.abs(I))))
    tiny = 1e-12 * scale
    col_zero = np.all(np.abs(top) <= tiny, axis=2) & np.all(np.abs(bottom) <= tiny, axis=2)
    rows = np.nonzero(np.any(col_zero, axis=1))[0]
    rep.assumption_violations = [float(traj.t[r]) for r in rows]
    if getattr(controller, "gamma", None) is not None:
        m = controller.integrating_factor(I, V)
        bad = ~np.isfinite(m) | (m == 0) | np.any(np.all(np.abs(top) <= tiny, axis=2), axis=1)
        rep.condition_violations = [float(traj.t[r]) for r in np.nonzero(bad)[0]]
    return rep


def duty_bound_events(traj: Trajectory):
    """Times at which some duty channel reaches 0 or 1 from the interior."""
    u = np.asarray(traj.u)
    at = (u <= 0.0) | (u >= 1.0)
    enter = at.copy()
    enter[1:] &= ~at[:-1]
    return [float(traj.t[r]) for r in np.nonzero(np.any(enter, axis=1))[0]]


def audit(traj: Trajectory, sc: Scenario) -> AuditReport:
    """Full audit of a trajectory against the scenario that produced it."""
    systems = sc.segment_systems()
    rep = passivity_audit(traj, systems)
    rep.merge(lyapunov_audit(traj, sc.controller, sc.system, sc.segment_targets(), sc.output_indices()))
    rep.merge(condition_audit(traj, sc.system, sc.controller))
    rep.saturation_events = duty_bound_events(traj)
    if sc.shift_note and sc.expect is None and not rep.converged:
        rep.notes.append("post-event setpoint shift expected: output shaping pins the shaped output, "
                         "so a load change moves the voltage equilibrium")
    return rep


def run(sc: Scenario):
    traj = integrate(sc)
    return traj, audit(traj, sc)


# CSV


def csv_columns(sigma, rho, p):
    cols = ["t"]
    cols += [f"I_{k + 1}" for k in range(sigma)]
    cols += [f"V_{k + 1}" for k in range(rho)]
    cols += [f"u_{k + 1}" for k in range(p)]
    cols += [f"dI_{k + 1}" for k in range(sigma)]
    cols += [f"dV_{k + 1}" for k in range(rho)]
    cols += ["S", "S_d", "supply"]
    cols += [f"upsilon_{k + 1}" for k in range(p)]
    cols += ["supply_step", "dissipation_step", "segment"]
    return cols


def write_csv(traj: Trajectory, path):
    sigma, rho, p = traj.I.shape[1], traj.V.shape[1], traj.u.shape[1]
    data = np.column_stack([
        traj.t, traj.I, traj.V, traj.u, traj.dI, traj.dV, traj.S, traj.S_d, traj.supply,
        traj.upsilon, traj.supply_step, traj.dissipation_step, traj.segment,
    ])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(csv_columns(sigma, rho, p)) + "\n")
        np.savetxt(fh, data, fmt="%.12g", delimiter=",", newline="\n")


def read_csv(path, sigma=None, rho=None, p=None) -> Trajectory:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    counts = {pre: sum(1 for c in header if c.startswith(pre + "_") and c[len(pre) + 1:].isdigit())
              for pre in ("I", "V", "u")}
    if header != csv_columns(counts["I"], counts["V"], counts["u"]):
        raise SchemaMismatch("unrecognised trajectory header")
    for name, want in (("I", sigma), ("V", rho), ("u", p)):
        if want is not None and counts[name] != want:
            raise SchemaMismatch(f"trajectory has {counts[name]} {name} columns, scenario expects {want}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    s, r, q = counts["I"], counts["V"], counts["u"]
    c = 1
    blocks = {}
    for name, w in (("I", s), ("V", r), ("u", q), ("dI", s), ("dV", r)):
        blocks[name] = data[:, c:c + w]
        c += w
    S, S_d, supply = data[:, c], data[:, c + 1], data[:, c + 2]
    c += 3
    ups = data[:, c:c + q]
    c += q
    return Trajectory(
        t=data[:, 0], I=blocks["I"], V=blocks["V"], u=blocks["u"], dI=blocks["dI"], dV=blocks["dV"],
        S=S, S_d=S_d, supply=supply, upsilon=ups, supply_step=data[:, c], dissipation_step=data[:, c + 1],
        segment=data[:, c + 2].astype(int),
    )
