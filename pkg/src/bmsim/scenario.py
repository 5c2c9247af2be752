"""Scenario documents: YAML text <-> validated dictionaries <-> ``Scenario`` objects.

Layout (SI units throughout)::

    name: fig6
    system:                      # kind: buck | boost | buckboost | cuk | network
      kind: buck
      L: 1.0e-3
      C: 1.0e-3
      G: 0.04
      Vs: 400.0
    controller:
      method: input_shaping      # input_shaping | output_shaping | output_shaping_alt
      kd: 1.6e6                  # scalar, or one value per node id for networks
      ki: 8.0e7
      Vstar: 380.0               # cuk: the (negative) output voltage
      gamma: identity            # output shaping only
    sim:
      dt: 1.0e-6
      t_end: 2.0
      initial: {I: [0.0], V: [0.0], u: [0.5]}
    events:
      - {time: 1.0, dG: 0.02}    # node: node id (networks) or 1-based capacitor
    audit:
      band: 0.5
      expect: [{V: [380.0], band: 0.5}, ...]   # optional per-segment targets

Network systems carry ``nodes`` (``id``, ``kind``, ``L``, ``C``, ``G``, ``Vs``)
and ``lines`` (``from``, ``to``, ``R``, ``L``) instead of converter parameters.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from .controllers import Gains, build_controller
from .converters import ConverterParams, boost_gamma, buck_gamma, converter_setpoint, make_converter
from .errors import BmsimError, ScenarioError
from .network import DcNetworkSpec, Line, build_network, network_setpoint
from .sim import LoadStep, Scenario, SegmentTarget, initial_state

CONVERTER_KINDS = ("buck", "boost", "buckboost", "cuk")
METHODS = ("input_shaping", "output_shaping", "output_shaping_alt")

_TOP = {"name": False, "system": True, "controller": True, "sim": True, "events": False, "audit": False}
_CONVERTER_KEYS = {"kind": True, "L": True, "C": True, "G": True, "Vs": True, "L2": False, "C2": False}
_NETWORK_KEYS = {"kind": True, "nodes": True, "lines": True, "allow_lossless": False}
_NODE_KEYS = {"id": True, "kind": True, "L": True, "C": True, "G": True, "Vs": True}
_LINE_KEYS = {"from": True, "to": True, "R": True, "L": True}
_CONTROLLER_KEYS = {"method": True, "kd": True, "ki": True, "mu": False, "Vstar": True, "gamma": False}
_SIM_KEYS = {"dt": True, "t_end": True, "initial": False, "method": False, "record_every": False,
             "saturate_duty": False}
_INITIAL_KEYS = {"I": False, "V": False, "u": False}
_EVENT_KEYS = {"time": True, "dG": True, "node": False}
_AUDIT_KEYS = {"band": False, "outputs": False, "expect": False}
_EXPECT_KEYS = {"V": True, "band": True}


class _Lines:
    """Line numbers (1-based) of every mapping key and sequence item, by path."""

    def __init__(self):
        self.at = {}

    def line(self, path):
        path = tuple(path)
        while path and path not in self.at:
            path = path[:-1]
        return self.at.get(path)


def _to_python(node, path, lines):
    lines.at[tuple(path)] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            if key in out:
                raise ScenarioError(f"duplicate key {key!r}", knode.start_mark.line + 1)
            lines.at[tuple(path) + (key,)] = knode.start_mark.line + 1
            out[key] = _to_python(vnode, list(path) + [key], lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, list(path) + [i], lines) for i, v in enumerate(node.value)]
    return _CONSTRUCTOR.construct_object(node, deep=True)


_CONSTRUCTOR = yaml.SafeLoader("")


def parse_text(text):
    """YAML text -> (plain dict, line table).  Raises ``ScenarioError`` with line numbers."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    lines = _Lines()
    if root is None:
        raise ScenarioError("empty scenario document", 1)
    if not isinstance(root, yaml.MappingNode):
        raise ScenarioError("scenario document must be a mapping", root.start_mark.line + 1)
    return _to_python(root, [], lines), lines


class _Checker:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, msg):
        where = ".".join(str(p) for p in path) or "<document>"
        raise ScenarioError(f"{where}: {msg}", self.lines.line(path) if self.lines else None)

    def mapping(self, value, path, keys):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for k in value:
            if k not in keys:
                self.fail(list(path) + [k], f"unknown key {k!r}; allowed: {', '.join(keys)}")
        for k, required in keys.items():
            if required and k not in value:
                self.fail(path, f"missing required key {k!r}")
        return value

    def number(self, value, path, positive=False, nonneg=False, nonzero=False):
        if isinstance(value, str):
            # YAML 1.1 reads "1e-6" (no dot) as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        x = float(value)
        if not np.isfinite(x):
            self.fail(path, "must be finite")
        if positive and not x > 0:
            self.fail(path, "must be positive")
        if nonneg and x < 0:
            self.fail(path, "must be nonnegative")
        if nonzero and x == 0:
            self.fail(path, "must be nonzero")
        return x

    def numbers(self, value, path, size=None, **kw):
        seq = value if isinstance(value, list) else [value]
        out = [self.number(v, list(path) + [i], **kw) for i, v in enumerate(seq)]
        if size is not None and len(out) not in (1, size) and isinstance(value, list):
            self.fail(path, f"expected 1 or {size} values, got {len(out)}")
        return out if isinstance(value, list) else out[0]

    def integer(self, value, path, low=None, high=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if (low is not None and value < low) or (high is not None and value > high):
            self.fail(path, f"must lie in {low}..{high}")
        return value

    def choice(self, value, path, options):
        if value not in options:
            self.fail(path, f"expected one of {', '.join(options)}, got {value!r}")
        return value


def validate(doc, lines=None):
    """Check the document shape and return a copy with every default filled in."""
    ck = _Checker(lines)
    ck.mapping(doc, [], _TOP)
    doc = copy.deepcopy(doc)
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        ck.fail(["name"], "expected a string")
    system = doc["system"]
    if not isinstance(system, dict) or "kind" not in system:
        ck.fail(["system"], "expected a mapping with a 'kind'")
    kind = ck.choice(system["kind"], ["system", "kind"], CONVERTER_KINDS + ("network",))
    if kind == "network":
        ck.mapping(system, ["system"], _NETWORK_KEYS)
        system.setdefault("allow_lossless", False)
        if not isinstance(system["allow_lossless"], bool):
            ck.fail(["system", "allow_lossless"], "expected true or false")
        if not isinstance(system["nodes"], list) or not system["nodes"]:
            ck.fail(["system", "nodes"], "expected a non-empty list")
        for i, nd in enumerate(system["nodes"]):
            path = ["system", "nodes", i]
            ck.mapping(nd, path, _NODE_KEYS)
            ck.integer(nd["id"], path + ["id"], 1, len(system["nodes"]))
            ck.choice(nd["kind"], path + ["kind"], ("buck", "boost"))
            for k in ("L", "C", "Vs"):
                nd[k] = ck.number(nd[k], path + [k], positive=True)
            nd["G"] = ck.number(nd["G"], path + ["G"], nonneg=True)
        ids = sorted(nd["id"] for nd in system["nodes"])
        if ids != list(range(1, len(ids) + 1)):
            ck.fail(["system", "nodes"], "node ids must be 1..n without repeats")
        if not isinstance(system["lines"], list):
            ck.fail(["system", "lines"], "expected a list")
        for i, ln in enumerate(system["lines"]):
            path = ["system", "lines", i]
            ck.mapping(ln, path, _LINE_KEYS)
            ck.integer(ln["from"], path + ["from"])
            ck.integer(ln["to"], path + ["to"])
            ln["R"] = ck.number(ln["R"], path + ["R"], nonneg=True)
            ln["L"] = ck.number(ln["L"], path + ["L"], positive=True)
        n_nodes = len(system["nodes"])
    else:
        ck.mapping(system, ["system"], _CONVERTER_KEYS)
        for k in ("L", "C"):
            system[k] = ck.number(system[k], ["system", k], positive=True)
        system["G"] = ck.number(system["G"], ["system", "G"], nonneg=True)
        system["Vs"] = ck.number(system["Vs"], ["system", "Vs"], nonzero=True)
        if kind == "cuk":
            for k in ("L2", "C2"):
                if k not in system:
                    ck.fail(["system"], f"cuk converter needs {k!r}")
                system[k] = ck.number(system[k], ["system", k], positive=True)
        else:
            for k in ("L2", "C2"):
                if k in system:
                    ck.fail(["system", k], f"only the cuk converter takes {k!r}")
        n_nodes = 1

    ctrl = ck.mapping(doc["controller"], ["controller"], _CONTROLLER_KEYS)
    method = ck.choice(ctrl["method"], ["controller", "method"], METHODS)
    ctrl["kd"] = ck.numbers(ctrl["kd"], ["controller", "kd"], n_nodes, positive=True)
    ctrl["ki"] = ck.numbers(ctrl["ki"], ["controller", "ki"], n_nodes, positive=True)
    ctrl.setdefault("mu", 0.0)
    ctrl["mu"] = ck.numbers(ctrl["mu"], ["controller", "mu"], n_nodes)
    ctrl["Vstar"] = ck.numbers(ctrl["Vstar"], ["controller", "Vstar"], n_nodes)
    if kind != "network" and isinstance(ctrl["Vstar"], list):
        if len(ctrl["Vstar"]) != 1:
            ck.fail(["controller", "Vstar"], "a single converter takes one target voltage")
        ctrl["Vstar"] = ctrl["Vstar"][0]
    if method == "output_shaping":
        if kind == "network" or kind in ("buckboost", "cuk"):
            ck.fail(["controller", "method"], f"output shaping is available for buck and boost only, not {kind}")
        default = "identity" if kind == "buck" else "inv_V2"
        ctrl.setdefault("gamma", default)
        allowed = ("identity",) if kind == "buck" else ("inv_V2", "inv_I2", "inv_norm2", "inv_IV")
        ck.choice(ctrl["gamma"], ["controller", "gamma"], allowed)
    elif "gamma" in ctrl:
        ck.fail(["controller", "gamma"], "gamma applies to output shaping only")
    if method == "output_shaping_alt":
        ck.fail(["controller", "method"], "output_shaping_alt applies to plain RLC circuits, not converters")

    sim = ck.mapping(doc["sim"], ["sim"], _SIM_KEYS)
    sim["dt"] = ck.number(sim["dt"], ["sim", "dt"], positive=True)
    sim["t_end"] = ck.number(sim["t_end"], ["sim", "t_end"], positive=True)
    sim.setdefault("method", "rk4")
    ck.choice(sim["method"], ["sim", "method"], ("rk4", "radau"))
    sim.setdefault("record_every", 1)
    ck.integer(sim["record_every"], ["sim", "record_every"], 1)
    sim.setdefault("saturate_duty", False)
    if not isinstance(sim["saturate_duty"], bool):
        ck.fail(["sim", "saturate_duty"], "expected true or false")
    init = ck.mapping(sim.setdefault("initial", {}), ["sim", "initial"], _INITIAL_KEYS)
    for k in ("I", "V", "u"):
        if k in init:
            init[k] = ck.numbers(init[k] if isinstance(init[k], list) else [init[k]], ["sim", "initial", k])

    events = doc.setdefault("events", [])
    if not isinstance(events, list):
        ck.fail(["events"], "expected a list")
    for i, ev in enumerate(events):
        path = ["events", i]
        ck.mapping(ev, path, _EVENT_KEYS)
        ev["time"] = ck.number(ev["time"], path + ["time"], nonneg=True)
        ev["dG"] = ck.number(ev["dG"], path + ["dG"])
        if "node" in ev:
            ck.integer(ev["node"], path + ["node"], 1)

    aud = ck.mapping(doc.setdefault("audit", {}), ["audit"], _AUDIT_KEYS)
    aud.setdefault("band", 0.5)
    aud["band"] = ck.number(aud["band"], ["audit", "band"], positive=True)
    if "outputs" in aud:
        if not isinstance(aud["outputs"], list) or not aud["outputs"]:
            ck.fail(["audit", "outputs"], "expected a non-empty list of 1-based voltage indices")
        for i, o in enumerate(aud["outputs"]):
            ck.integer(o, ["audit", "outputs", i], 1)
    if "expect" in aud:
        if not isinstance(aud["expect"], list):
            ck.fail(["audit", "expect"], "expected a list with one target per segment")
        for i, ex in enumerate(aud["expect"]):
            path = ["audit", "expect", i]
            ck.mapping(ex, path, _EXPECT_KEYS)
            ex["V"] = ck.numbers(ex["V"] if isinstance(ex["V"], list) else [ex["V"]], path + ["V"])
            ex["band"] = ck.number(ex["band"], path + ["band"], positive=True)
    doc["name"] = name
    return doc


def _fail(msg, lines, path):
    raise ScenarioError(f"{'.'.join(str(p) for p in path)}: {msg}", lines.line(path) if lines else None)


def _per_node(values, order):
    """Scalar or per-node-id list -> array in assembled node order."""
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if v.size == 1:
        return np.full(len(order), v[0])
    return v[[i - 1 for i in order]]


def _converter_params(system):
    return ConverterParams(system["kind"], float(system["L"]), float(system["C"]), float(system["G"]),
                           float(system["Vs"]), system.get("L2"), system.get("C2"))


def _network(doc):
    system, ctrl = doc["system"], doc["controller"]
    nodes = sorted(system["nodes"], key=lambda nd: nd["id"])
    mk = lambda nd: ConverterParams(nd["kind"], float(nd["L"]), float(nd["C"]), float(nd["G"]), float(nd["Vs"]))
    bucks = [nd for nd in nodes if nd["kind"] == "buck"]
    boosts = [nd for nd in nodes if nd["kind"] == "boost"]
    spec = DcNetworkSpec(
        [mk(nd) for nd in bucks], [mk(nd) for nd in boosts],
        [Line(int(ln["from"]), int(ln["to"]), float(ln["R"]), float(ln["L"])) for ln in system["lines"]],
        ctrl["Vstar"], buck_ids=[nd["id"] for nd in bucks], boost_ids=[nd["id"] for nd in boosts],
    )
    return build_network(spec, allow_lossless=system["allow_lossless"])


def build_scenario(doc, lines=None) -> Scenario:
    """Validated document -> ``Scenario``.  Domain errors are reported against the document."""
    doc = validate(doc, lines)
    try:
        return _build(doc, lines)
    except ScenarioError:
        raise
    except BmsimError as exc:
        raise ScenarioError(f"{type(exc).__name__}: {exc}", lines.line(["system"]) if lines else None) from None


def _build(doc, lines):
    system, ctrl, sim, aud = doc["system"], doc["controller"], doc["sim"], doc["audit"]
    kind = system["kind"]
    if kind == "network":
        net = _network(doc)
        sys = net.system
        order = net.node_order
        sp = network_setpoint(net)
        kd, ki, mu = (_per_node(ctrl[k], order) for k in ("kd", "ki", "mu"))
        gamma = None
        to_index = lambda node: net.index_of(node)
        default_u = 0.5
    else:
        params = _converter_params(system)
        sys = make_converter(params)
        sp = converter_setpoint(params, float(ctrl["Vstar"]))
        kd, ki, mu = (float(np.atleast_1d(ctrl[k])[0]) for k in ("kd", "ki", "mu"))
        gamma = None
        if ctrl["method"] == "output_shaping":
            gamma = buck_gamma(params.Vs) if kind == "buck" else boost_gamma(ctrl["gamma"])
        to_index = lambda node: int(node) - 1
        default_u = 0.5 if kind == "buck" else 0.1
    controller = build_controller(ctrl["method"], Gains(kd, ki, mu), sp, gamma)

    init = sim["initial"]
    p = np.atleast_1d(sp.ubar).size
    I0 = _sized(init.get("I", [0.0]), sys.sigma, lines, ["sim", "initial", "I"])
    V0 = _sized(init.get("V", [0.0]), sys.rho, lines, ["sim", "initial", "V"])
    u0 = _sized(init.get("u", [default_u]), p, lines, ["sim", "initial", "u"])
    events = []
    for i, ev in enumerate(doc["events"]):
        index = None
        if "node" in ev:
            node = ev["node"]
            limit = sys.rho if kind != "network" else len(system["nodes"])
            if node > limit:
                _fail(f"node {node} does not exist", lines, ["events", i, "node"])
            index = to_index(node)
        events.append(LoadStep(float(ev["time"]), float(ev["dG"]), index))
    outputs = None
    if "outputs" in aud:
        outputs = []
        for i, o in enumerate(aud["outputs"]):
            if o > sys.rho:
                _fail(f"voltage index {o} exceeds {sys.rho}", lines, ["audit", "outputs", i])
            outputs.append(int(o) - 1)
    expect = None
    if "expect" in aud:
        expect = [SegmentTarget(np.asarray(ex["V"], dtype=float), float(ex["band"])) for ex in aud["expect"]]
    return Scenario(
        system=sys, controller=controller, t_end=float(sim["t_end"]), dt=float(sim["dt"]),
        initial=initial_state(sys, I0, V0, u0), events=events, record_every=int(sim["record_every"]),
        method=sim["method"], saturate=bool(sim["saturate_duty"]), outputs=outputs, band=float(aud["band"]),
        expect=expect, name=doc["name"], shift_note=ctrl["method"] == "output_shaping" and bool(events),
    )


def _sized(values, n, lines, path):
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return np.full(n, float(v[0]))
    if v.size != n:
        _fail(f"expected 1 or {n} values, got {v.size}", lines, path)
    return v


def resolve(doc, lines=None):
    """Document with every default materialized, including the initial state."""
    doc = validate(doc, lines)
    sc = build_scenario(doc, lines)
    out = copy.deepcopy(doc)
    out["sim"]["initial"] = {
        "I": [float(x) for x in sc.initial.I],
        "V": [float(x) for x in sc.initial.V],
        "u": [float(x) for x in np.atleast_1d(sc.initial.u)],
    }
    return out


def load_text(text):
    doc, lines = parse_text(text)
    return validate(doc, lines), lines


def load_file(path):
    with open(path) as fh:
        text = fh.read()
    return load_text(text)


def dump(doc):
    """Deterministic YAML text; floats use the shortest round-tripping repr."""
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
