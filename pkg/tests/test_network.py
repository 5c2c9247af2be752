import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmsim.converters import ConverterParams, make_converter
from bmsim.core import CircuitState, srlc_dynamics, srlc_output
from bmsim.errors import DimensionError, DisconnectedGraph, InvalidEdge, InvalidParams, NoFeasibleInput
from bmsim.network import (
    DcNetworkSpec,
    IncidenceMatrix,
    Line,
    assemble_dc_network,
    build_network,
    incidence_from_edges,
    network_dynamics,
    network_output_ydc,
    network_setpoint,
)
from bmsim.presets import NETWORK_EDGES, NETWORK_LINE_L, NETWORK_LINE_R, NETWORK_NODES

BUCK = ConverterParams("buck", 1e-3, 1e-3, 0.04, 400.0)
BOOST = ConverterParams("boost", 1.12e-3, 6.8e-3, 0.04, 280.0)


def ring_network(vstar=380.0, edges=NETWORK_EDGES):
    buck = [ConverterParams("buck", L, C, G, vs) for _, k, L, C, vs, G, _ in NETWORK_NODES if k == "buck"]
    boost = [ConverterParams("boost", L, C, G, vs) for _, k, L, C, vs, G, _ in NETWORK_NODES if k == "boost"]
    lines = [Line(a, b, NETWORK_LINE_R, NETWORK_LINE_L) for a, b in edges]
    return build_network(DcNetworkSpec(buck, boost, lines, vstar, buck_ids=[1, 3], boost_ids=[2, 4]))


def random_state(rng, net):
    return CircuitState(rng.normal(0, 20, net.system.sigma), rng.uniform(-400, 400, net.n_nodes))


def test_two_node_incidence():
    assert incidence_from_edges([(1, 2)], 2).D.tolist() == [[1.0], [-1.0]]


def test_ring_incidence():
    D = incidence_from_edges(NETWORK_EDGES, 4).D
    assert D.shape == (4, 4)
    assert np.all(D.sum(axis=0) == 0)
    assert np.all(np.abs(D).sum(axis=1) == 2)  # every ring node touches two lines


def test_invalid_edges():
    with pytest.raises(InvalidEdge):
        incidence_from_edges([(2, 2)], 3)
    with pytest.raises(InvalidEdge):
        incidence_from_edges([(1, 4)], 3)
    with pytest.raises(InvalidEdge):
        IncidenceMatrix(np.array([[1.0], [1.0]]))


def test_disconnected_graph():
    spec = DcNetworkSpec([BUCK, BUCK], [BOOST], [Line(1, 2, 0.1, 1e-6)], 380.0)
    with pytest.raises(DisconnectedGraph):
        build_network(spec)


def test_line_parameters_checked():
    with pytest.raises(InvalidParams):
        build_network(DcNetworkSpec([BUCK], [BOOST], [Line(1, 2, 0.1, 0.0)], 380.0))
    with pytest.raises(InvalidParams):
        build_network(DcNetworkSpec([BUCK], [BOOST], [Line(1, 2, 0.0, 1e-6)], 380.0))
    net = build_network(DcNetworkSpec([BUCK], [BOOST], [Line(1, 2, 0.0, 1e-6)], 380.0), allow_lossless=True)
    assert net.system.R[2, 2] == 0.0


def test_node_ids_must_be_a_permutation():
    with pytest.raises(InvalidParams):
        DcNetworkSpec([BUCK], [BOOST], [], 380.0, buck_ids=[1], boost_ids=[3])
    with pytest.raises(InvalidParams):
        DcNetworkSpec([BOOST], [], [], 380.0)


def test_single_buck_network_is_the_buck_converter():
    sys = assemble_dc_network(DcNetworkSpec([BUCK], [], [], 380.0))
    ref = make_converter(BUCK)
    for name in ("L", "C", "R", "G", "Gamma0", "dGamma", "B0", "dB", "Vs"):
        assert np.array_equal(getattr(sys, name), getattr(ref, name)), name


def test_assembled_field_matches_hand_coded(rng):
    net = ring_network()
    for _ in range(50):
        s = random_state(rng, net)
        u = rng.uniform(0, 1, 4)
        dI, dV = srlc_dynamics(net.system, s, u)
        hI, hV = network_dynamics(net, s, u)
        assert np.allclose(dI, hI, rtol=1e-12, atol=1e-9 * np.max(np.abs(hI)))
        assert np.allclose(dV, hV, rtol=1e-12, atol=1e-9 * np.max(np.abs(hV)))


def test_node_equation_carries_line_current():
    spec = DcNetworkSpec([BUCK], [BOOST], [Line(1, 2, 0.2, 3e-6)], 380.0)
    net = build_network(spec)
    s = CircuitState([10.0, 12.0, 0.0], [370.0, 390.0])
    s2 = CircuitState([10.0, 12.0, 4.0], [370.0, 390.0])
    _, dV = srlc_dynamics(net.system, s, [0.9, 0.3])
    _, dV2 = srlc_dynamics(net.system, s2, [0.9, 0.3])
    # the line leaves node 1 (+1) and enters node 2 (-1)
    assert dV2 - dV == pytest.approx([4.0 / BUCK.C, -4.0 / BOOST.C])


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 500), st.floats(0, 500))
def test_line_equation(Il, Va, Vb):
    net = build_network(DcNetworkSpec([BUCK], [BOOST], [Line(1, 2, 0.2, 3e-6)], 380.0))
    dI, _ = srlc_dynamics(net.system, CircuitState([1.0, 2.0, Il], [Va, Vb]), [0.5, 0.5])
    assert -3e-6 * dI[2] == pytest.approx((Va - Vb) + 0.2 * Il, rel=1e-9, abs=1e-9)


def test_node_order_follows_ids():
    net = ring_network()
    assert net.node_order == (1, 3, 2, 4)
    assert net.index_of(3) == 1 and net.index_of(2) == 2
    with pytest.raises(InvalidParams):
        net.index_of(7)


def test_ydc_rows(rng):
    net = ring_network()
    s = random_state(rng, net)
    dI, dV = rng.normal(0, 100, 8), rng.normal(0, 100, 4)
    y = network_output_ydc(net, s, dI, dV)
    assert y[:2] == pytest.approx(dI[:2] * net.vs[:2])
    assert y[2:] == pytest.approx(dI[2:4] * s.V[2:] - dV[2:] * s.I[2:4])
    # the generic multi-channel output gives the same rows
    assert y == pytest.approx(srlc_output(net.system, s, dI, dV), rel=1e-12)
    assert np.all(network_output_ydc(net, s, np.zeros(8), np.zeros(4)) == 0)
    with pytest.raises(DimensionError):
        network_output_ydc(net, s, np.zeros(7), np.zeros(4))


def test_network_setpoint_is_steady_state():
    net = ring_network([380.0, 378.0, 384.0, 381.0])
    sp = network_setpoint(net)
    dI, dV = srlc_dynamics(net.system, CircuitState(sp.Ibar, sp.Vstar), sp.ubar)
    scale = max(np.abs(sp.Vstar).max(), np.abs(sp.Ibar).max())
    assert np.max(np.abs(np.concatenate([dI * np.diag(net.system.L), dV * np.diag(net.system.C)]))) <= 1e-9 * scale
    assert np.all((sp.ubar > 0) & (sp.ubar < 1))
    # Vstar is listed by node id, the setpoint in assembled order
    assert list(sp.Vstar) == [380.0, 384.0, 378.0, 381.0]


def test_equal_targets_leave_lines_idle():
    sp = network_setpoint(ring_network())
    assert np.allclose(sp.Ibar[4:], 0.0, atol=1e-9)
    assert sp.ubar[:2] == pytest.approx([380.0 / 400.0, 380.0 / 450.0])
    assert sp.ubar[2:] == pytest.approx([1 - 280.0 / 380.0, 1 - 320.0 / 380.0])


def test_orientation_antisymmetry(rng):
    vstar = [380.0, 378.0, 384.0, 381.0]
    flipped = [(b, a) if k == 1 else (a, b) for k, (a, b) in enumerate(NETWORK_EDGES)]
    n1, n2 = ring_network(vstar), ring_network(vstar, flipped)
    s1, s2 = network_setpoint(n1), network_setpoint(n2)
    assert s2.Ibar[5] == pytest.approx(-s1.Ibar[5], rel=1e-9)
    assert np.delete(s2.Ibar, 5) == pytest.approx(np.delete(s1.Ibar, 5), rel=1e-9)
    assert s2.ubar == pytest.approx(s1.ubar, rel=1e-12)
    s = random_state(rng, n1)
    mirrored = CircuitState(s.I * np.where(np.arange(8) == 5, -1, 1), s.V)
    u = rng.uniform(0, 1, 4)
    a, b = srlc_dynamics(n1.system, s, u), srlc_dynamics(n2.system, mirrored, u)
    assert b[0][5] == pytest.approx(-a[0][5]) and b[1] == pytest.approx(a[1])


def test_lossless_line_between_different_targets():
    net = build_network(DcNetworkSpec([BUCK], [BOOST], [Line(1, 2, 0.0, 1e-6)], [380.0, 370.0]), allow_lossless=True)
    with pytest.raises(NoFeasibleInput):
        network_setpoint(net)
