"""Named scenario documents for the reference converter and network cases.

Inductances and capacitances are stored in SI units (H, F).  Initial states,
the line impedances of the network, and the gains of the buck-boost and Cuk
scenarios are choices of this package and are recorded in the generated
documents.
"""

from __future__ import annotations

from .errors import UnknownPreset
from .scenario import build_scenario, dump, validate

DT = 1e-6

# Line impedance used for every ring line of the four-node network.
NETWORK_LINE_R = 0.3
NETWORK_LINE_L = 2e-6

# (id, kind, L, C, Vs, G, dG) per network node
NETWORK_NODES = (
    (1, "buck", 1.8e-3, 2.2e-3, 400.0, 0.08, 0.01),
    (2, "boost", 1.12e-3, 6.8e-3, 280.0, 0.04, 0.03),
    (3, "buck", 3.0e-3, 2.5e-3, 450.0, 0.05, -0.03),
    (4, "boost", 1.12e-3, 6.8e-3, 320.0, 0.07, 0.01),
)
NETWORK_EDGES = ((1, 2), (2, 3), (3, 4), (1, 4))


def _buck(G=0.04):
    return {"kind": "buck", "L": 1e-3, "C": 1e-3, "G": G, "Vs": 400.0}


def _boost(G=0.04):
    return {"kind": "boost", "L": 1.12e-3, "C": 6.8e-3, "G": G, "Vs": 280.0}


def _fig5():
    kd, ki, L, G, vstar, vs = 5e5, 1e7, 1e-3, 0.04, 380.0, 400.0
    # Start on the slow manifold of the loop: with I = V = 0 the duty that makes
    # the controller rate vanish is L (ki/kd) Ibar / Vs.
    u0 = L * (ki / kd) * (G * vstar) / vs
    return {
        "name": "fig5",
        "system": _buck(G),
        "controller": {"method": "output_shaping", "kd": kd, "ki": ki, "Vstar": vstar, "gamma": "identity"},
        "sim": {"dt": DT, "t_end": 2.0, "method": "radau", "record_every": 100,
                "initial": {"I": [0.0], "V": [0.0], "u": [u0]}},
        "events": [{"time": 1.0, "dG": 0.02}],
        "audit": {"band": 0.5, "expect": [{"V": [vstar], "band": 0.5},
                                          {"V": [G * vstar / (G + 0.02)], "band": 1.0}]},
    }


def _fig6():
    return {
        "name": "fig6",
        "system": _buck(),
        "controller": {"method": "input_shaping", "kd": 16e5, "ki": 8e7, "Vstar": 380.0},
        "sim": {"dt": DT, "t_end": 2.0, "record_every": 100, "initial": {"I": [0.0], "V": [0.0], "u": [0.5]}},
        "events": [{"time": 1.0, "dG": 0.02}],
        "audit": {"band": 0.5},
    }


def _fig7():
    G, vstar, vs = 0.04, 380.0, 280.0
    # The post-event mode is slow (tens of seconds); start at the setpoint so the
    # pre-event segment is at rest and the run isolates the load response.
    return {
        "name": "fig7",
        "system": _boost(G),
        "controller": {"method": "output_shaping", "kd": 5e2, "ki": 1e6, "Vstar": vstar, "gamma": "inv_V2"},
        "sim": {"dt": DT, "t_end": 30.0, "record_every": 1000,
                "initial": {"I": [G * vstar * vstar / vs], "V": [vstar], "u": [1.0 - vs / vstar]}},
        "events": [{"time": 1.0, "dG": -0.02}],
        "audit": {"band": 0.5, "expect": [{"V": [vstar], "band": 0.5},
                                          {"V": [G * vstar / (G - 0.02)], "band": 2.0}]},
    }


def _fig8():
    return {
        "name": "fig8",
        "system": _boost(),
        "controller": {"method": "input_shaping", "kd": 1e6, "ki": 4e7, "Vstar": 380.0},
        "sim": {"dt": DT, "t_end": 2.0, "record_every": 100, "initial": {"I": [0.0], "V": [280.0], "u": [0.1]}},
        "events": [{"time": 1.0, "dG": 0.02}],
        "audit": {"band": 0.5},
    }


def _network4():
    nodes = [{"id": i, "kind": k, "L": L, "C": C, "G": G, "Vs": vs} for i, k, L, C, vs, G, _ in NETWORK_NODES]
    lines = [{"from": a, "to": b, "R": NETWORK_LINE_R, "L": NETWORK_LINE_L} for a, b in NETWORK_EDGES]
    kd = [4e5 if k == "buck" else 1e6 for _, k, *_ in NETWORK_NODES]
    # Bus capacitors precharged to the nominal voltage, inductors empty.  From a
    # fully discharged network the buck duties overshoot 1 during the start-up.
    return {
        "name": "network4",
        "system": {"kind": "network", "nodes": nodes, "lines": lines},
        "controller": {"method": "input_shaping", "kd": kd, "ki": [4e7] * 4, "Vstar": [380.0] * 4},
        "sim": {"dt": DT, "t_end": 2.0, "record_every": 100,
                "initial": {"I": [0.0] * 8, "V": [380.0] * 4, "u": [0.5] * 4}},
        "events": [{"time": 1.0, "dG": dG, "node": i} for i, *_, dG in NETWORK_NODES],
        "audit": {"band": 1.0},
    }


def _buckboost_is():
    return {
        "name": "buckboost_is",
        "system": {"kind": "buckboost", "L": 1.12e-3, "C": 6.8e-3, "G": 0.04, "Vs": 400.0},
        "controller": {"method": "input_shaping", "kd": 1e6, "ki": 4e7, "Vstar": 380.0},
        "sim": {"dt": DT, "t_end": 2.0, "record_every": 100, "initial": {"I": [0.0], "V": [0.0], "u": [0.5]}},
        "events": [{"time": 1.0, "dG": 0.02}],
        "audit": {"band": 0.005 * 380.0},
    }


def _cuk_is():
    # From the zero state this loop drifts off along a ramp; precharging the
    # coupling capacitor to Vs puts it in the basin of the setpoint.
    return {
        "name": "cuk_is",
        "system": {"kind": "cuk", "L": 1.12e-3, "C": 6.8e-3, "G": 0.04, "Vs": 400.0, "L2": 1.12e-3, "C2": 6.8e-3},
        "controller": {"method": "input_shaping", "kd": 1e6, "ki": 4e7, "Vstar": -380.0},
        "sim": {"dt": DT, "t_end": 2.0, "record_every": 100,
                "initial": {"I": [0.0, 0.0], "V": [400.0, 0.0], "u": [0.1]}},
        "events": [{"time": 1.0, "dG": 0.02}],
        "audit": {"band": 0.005 * 380.0, "outputs": [2]},
    }


PRESETS = {
    "fig5": _fig5,
    "fig6": _fig6,
    "fig7": _fig7,
    "fig8": _fig8,
    "network4": _network4,
    "buckboost_is": _buckboost_is,
    "cuk_is": _cuk_is,
}


def preset_names():
    return tuple(PRESETS)


def preset_document(name):
    try:
        make = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return validate(make())


def preset_text(name):
    return dump(preset_document(name))


def build_preset(name):
    return build_scenario(preset_document(name))
