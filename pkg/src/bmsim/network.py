"""DC networks of buck and boost nodes coupled by RL lines.

Ordering of the assembled state: ``I = (I_buck, I_boost, I_line)`` and
``V = (V_buck, V_boost)``; duty channels follow the node order
``(buck nodes..., boost nodes...)``.  Node ids in a ``DcNetworkSpec`` are the
user's 1-based labels and may interleave buck and boost nodes.

A line ``(a, b, R, L)`` is oriented from ``a`` (positive end) to ``b``; its
current obeys ``-L dI_l/dt = D^T V + R I_l`` with ``D`` the incidence matrix.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import root

from .converters import ConverterParams
from .core import CircuitState, Setpoint, SwitchedRlcSystem, srlc_dynamics
from .errors import DimensionError, DisconnectedGraph, InvalidEdge, InvalidParams, NoFeasibleInput


@dataclass(frozen=True)
class IncidenceMatrix:
    D: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if D.ndim != 2:
            raise DimensionError("incidence matrix must be 2-D")
        ok = np.all(np.isin(D, (-1.0, 0.0, 1.0))) and np.all((D == 1).sum(axis=0) == 1) and np.all((D == -1).sum(axis=0) == 1)
        if not ok:
            raise InvalidEdge("each column needs exactly one +1 and one -1")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)


def incidence_from_edges(edges, n):
    """Incidence matrix of ``n`` nodes; ``edges`` holds 1-based ``(from, to)`` pairs."""
    edges = list(edges)
    D = np.zeros((n, len(edges)))
    for k, edge in enumerate(edges):
        a, b = int(edge[0]), int(edge[1])
        if not (1 <= a <= n and 1 <= b <= n):
            raise InvalidEdge(f"edge {k + 1} ({a}, {b}) references a node outside 1..{n}")
        if a == b:
            raise InvalidEdge(f"edge {k + 1} is a self-loop at node {a}")
        D[a - 1, k] = 1.0
        D[b - 1, k] = -1.0
    return IncidenceMatrix(D)


@dataclass(frozen=True)
class Line:
    a: int
    b: int
    R: float
    L: float


@dataclass(frozen=True)
class DcNetworkSpec:
    """Network description.

    ``Vstar`` is a scalar or one value per node, listed by node id.  Without
    explicit ids, buck nodes are numbered first.
    """

    buck_nodes: Sequence[ConverterParams]
    boost_nodes: Sequence[ConverterParams]
    lines: Sequence
    Vstar: object
    buck_ids: Optional[Sequence[int]] = None
    boost_ids: Optional[Sequence[int]] = None

    def __post_init__(self):
        object.__setattr__(self, "buck_nodes", tuple(self.buck_nodes))
        object.__setattr__(self, "boost_nodes", tuple(self.boost_nodes))
        object.__setattr__(self, "lines", tuple(l if isinstance(l, Line) else Line(*l) for l in self.lines))
        na, nb = len(self.buck_nodes), len(self.boost_nodes)
        if self.buck_ids is None:
            object.__setattr__(self, "buck_ids", tuple(range(1, na + 1)))
        if self.boost_ids is None:
            object.__setattr__(self, "boost_ids", tuple(range(na + 1, na + nb + 1)))
        object.__setattr__(self, "buck_ids", tuple(int(i) for i in self.buck_ids))
        object.__setattr__(self, "boost_ids", tuple(int(i) for i in self.boost_ids))
        if len(self.buck_ids) != na or len(self.boost_ids) != nb:
            raise InvalidParams("one id per buck and per boost node is required")
        if sorted(self.buck_ids + self.boost_ids) != list(range(1, na + nb + 1)):
            raise InvalidParams("node ids must be a permutation of 1..n")
        for p in self.buck_nodes:
            if p.kind != "buck":
                raise InvalidParams("buck_nodes must hold buck converters")
        for p in self.boost_nodes:
            if p.kind != "boost":
                raise InvalidParams("boost_nodes must hold boost converters")

    @property
    def n_nodes(self):
        return len(self.buck_nodes) + len(self.boost_nodes)

    @property
    def node_order(self):
        """Node ids in assembled (buck-first) order."""
        return self.buck_ids + self.boost_ids

    def vstar_by_id(self):
        v = np.atleast_1d(np.asarray(self.Vstar, dtype=float)).ravel()
        if v.size == 1:
            v = np.full(self.n_nodes, v[0])
        if v.size != self.n_nodes:
            raise DimensionError(f"Vstar needs {self.n_nodes} entries")
        return v


def _check_connected(n, lines):
    adj = {i: set() for i in range(1, n + 1)}
    for l in lines:
        adj[l.a].add(l.b)
        adj[l.b].add(l.a)
    seen, todo = {1}, deque([1])
    while todo:
        for j in adj[todo.popleft()] - seen:
            seen.add(j)
            todo.append(j)
    if len(seen) != n:
        raise DisconnectedGraph(f"nodes {sorted(set(adj) - seen)} are not reachable from node 1")


class DcNetwork:
    """Assembled network: the switched system plus the bookkeeping to address nodes."""

    def __init__(self, spec: DcNetworkSpec, allow_lossless=False):
        self.spec = spec
        n = spec.n_nodes
        if n == 0:
            raise InvalidParams("network has no nodes")
        for l in spec.lines:
            if not (l.L > 0):
                raise InvalidParams(f"line {l.a}-{l.b}: inductance must be positive")
            if l.R < 0 or (l.R == 0 and not allow_lossless):
                raise InvalidParams(f"line {l.a}-{l.b}: resistance must be positive")
        D_by_id = incidence_from_edges([(l.a, l.b) for l in spec.lines], n).D if spec.lines else np.zeros((n, 0))
        _check_connected(n, spec.lines)
        order = [i - 1 for i in spec.node_order]
        self.D = D_by_id[order, :]
        self.n_buck = len(spec.buck_nodes)
        self.n_boost = len(spec.boost_nodes)
        self.n_lines = len(spec.lines)
        self.n_nodes = n
        self.node_order = spec.node_order
        nodes = spec.buck_nodes + spec.boost_nodes
        self.vs = np.array([p.Vs for p in nodes])
        self.vstar = spec.vstar_by_id()[order]
        self.system = _assemble(self, nodes, spec.lines)

    def index_of(self, node_id):
        """Position of a node id in the assembled voltage vector."""
        try:
            return self.node_order.index(int(node_id))
        except ValueError:
            raise InvalidParams(f"no node with id {node_id}") from None

    @property
    def sigma(self):
        return self.system.sigma


def _assemble(net, nodes, lines):
    na, nb, nl, n = net.n_buck, net.n_boost, net.n_lines, net.n_nodes
    sigma = n + nl
    L = np.diag([p.L for p in nodes] + [l.L for l in lines])
    C = np.diag([p.C for p in nodes])
    R = np.diag([0.0] * n + [l.R for l in lines])
    G = np.diag([p.G for p in nodes])
    Gamma0 = np.zeros((sigma, n))
    Gamma0[:n, :n] = np.eye(n)
    Gamma0[n:, :] = net.D.T
    B0 = np.zeros((sigma, n))
    B0[na:n, na:n] = np.eye(nb)
    Gamma1 = np.repeat(Gamma0[None], n, axis=0)
    B1 = np.repeat(B0[None], n, axis=0)
    for k in range(na):
        B1[k, k, k] = 1.0
    for k in range(na, n):
        Gamma1[k, k, k] = 0.0
    return SwitchedRlcSystem(L, C, R, G, Gamma0, Gamma1, B0, B1, net.vs)


def assemble_dc_network(spec: DcNetworkSpec, allow_lossless=False) -> SwitchedRlcSystem:
    return DcNetwork(spec, allow_lossless).system


def build_network(spec: DcNetworkSpec, allow_lossless=False) -> DcNetwork:
    return DcNetwork(spec, allow_lossless)


def network_dynamics(net: DcNetwork, s: CircuitState, u):
    """Node and line equations written block by block (independent of the assembly)."""
    na, n = net.n_buck, net.n_nodes
    sys = net.system
    u = np.asarray(u, dtype=float)
    Ia, Ib, Il = s.I[:na], s.I[na:n], s.I[n:]
    Va, Vb = s.V[:na], s.V[na:]
    La, Lb, Ll = np.diag(sys.L)[:na], np.diag(sys.L)[na:n], np.diag(sys.L)[n:]
    Ca, Cb = np.diag(sys.C)[:na], np.diag(sys.C)[na:]
    Ga, Gb = np.diag(sys.G)[:na], np.diag(sys.G)[na:]
    Rl = np.diag(sys.R)[n:]
    ua, ub = u[:na], u[na:]
    vsa, vsb = net.vs[:na], net.vs[na:]
    Da, Db = net.D[:na], net.D[na:]
    dIa = -(Va - ua * vsa) / La
    dIb = -((1 - ub) * Vb - vsb) / Lb
    dIl = -(net.D.T @ s.V + Rl * Il) / Ll
    dVa = (Ia - Ga * Va + Da @ Il) / Ca
    dVb = ((1 - ub) * Ib - Gb * Vb + Db @ Il) / Cb
    return np.concatenate([dIa, dIb, dIl]), np.concatenate([dVa, dVb])


def network_output_ydc(net: DcNetwork, s: CircuitState, dI, dV):
    """Per-node output: ``dI_i Vs_i`` for buck nodes, ``dI_j V_j - dV_j I_j`` for boost nodes."""
    na, n = net.n_buck, net.n_nodes
    dI = np.asarray(dI, dtype=float)
    dV = np.asarray(dV, dtype=float)
    if dI.shape != (net.system.sigma,) or dV.shape != (n,):
        raise DimensionError("derivative sizes do not match the network")
    ya = dI[:na] * net.vs[:na]
    yb = dI[na:n] * s.V[na:] - dV[na:] * s.I[na:n]
    return np.concatenate([ya, yb])


def network_setpoint(net: DcNetwork, tol=1e-9) -> Setpoint:
    """Currents and duty cycles holding every node at its target voltage.

    Seeded by the per-node closed forms and refined by a Newton-type solve of
    the stacked steady-state residual with the voltages held at target.
    """
    sys = net.system
    na, n = net.n_buck, net.n_nodes
    V = net.vstar.copy()
    Rl = np.diag(sys.R)[n:]
    flows = net.D.T @ V
    if np.any((Rl == 0) & (np.abs(flows) > 0)):
        raise NoFeasibleInput("lossless line between nodes at different targets")
    with np.errstate(divide="ignore", invalid="ignore"):
        Il = np.where(Rl > 0, -flows / np.where(Rl > 0, Rl, 1.0), 0.0)
    G = np.diag(sys.G)
    inj = G * V - net.D @ Il
    u0 = np.empty(n)
    u0[:na] = V[:na] / net.vs[:na]
    u0[na:] = 1.0 - net.vs[na:] / V[na:]
    I0 = np.empty(n)
    I0[:na] = inj[:na]
    I0[na:] = inj[na:] / (1.0 - u0[na:])
    x0 = np.concatenate([I0, Il, u0])
    scale_I = np.diag(sys.L)
    scale_V = np.diag(sys.C)

    def residual(x):
        I, u = x[: sys.sigma], x[sys.sigma:]
        dI, dV = srlc_dynamics(sys, CircuitState(I, V), u)
        return np.concatenate([dI * scale_I, dV * scale_V])

    sol = root(residual, x0, method="hybr", tol=1e-14)
    x = sol.x if np.max(np.abs(residual(sol.x))) <= np.max(np.abs(residual(x0))) else x0
    I, u = x[: sys.sigma], x[sys.sigma:]
    ref = max(np.abs(V).max(), np.abs(I).max(), 1.0)
    if np.max(np.abs(residual(x))) > tol * ref:
        raise NoFeasibleInput("network steady state did not converge")
    if np.any(u <= 0) or np.any(u >= 1):
        raise NoFeasibleInput(f"network steady state needs duty cycles outside (0, 1): {u}")
    return Setpoint(V, I, u)
