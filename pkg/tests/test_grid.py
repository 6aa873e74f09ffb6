import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varinertia import (
    BusParams,
    ConstantInertia,
    Disturbance,
    GraphError,
    NetworkGraph,
    PowerNetwork,
    SimConfig,
    build_incidence,
    integrate,
    power_flow_linear,
    power_flow_nonlinear,
)
from varinertia import cases


def test_incidence_two_bus():
    g = NetworkGraph(("1", "2"), [("1", "2", 1.0)])
    np.testing.assert_array_equal(build_incidence(g), [[1], [-1]])


def test_incidence_path():
    g = NetworkGraph(("1", "2", "3"), [("1", "2", 1.0), ("2", "3", 1.0)])
    np.testing.assert_array_equal(build_incidence(g), [[1, 0], [-1, 1], [0, -1]])


def test_incidence_triangle():
    g = NetworkGraph(("1", "2", "3"), [("1", "2", 1.0), ("2", "3", 1.0), ("1", "3", 1.0)])
    H = build_incidence(g)
    assert H.shape == (3, 3)
    np.testing.assert_array_equal(H.sum(axis=0), 0)
    np.testing.assert_array_equal(H.sum(axis=1), [2, 0, -2])


def test_disconnected_graph_lists_components():
    g = NetworkGraph(("1", "2", "3", "4"), [("1", "2", 1.0), ("3", "4", 1.0)])
    with pytest.raises(GraphError, match="3"):
        build_incidence(g)


@pytest.mark.parametrize("lines, message", [
    ([("1", "9", 1.0)], "unknown bus"),
    ([("1", "1", 1.0)], "self loop"),
    ([("1", "2", 1.0), ("2", "1", 1.0)], "duplicate"),
    ([("1", "2", 0.0)], "positive susceptance"),
])
def test_malformed_lines_rejected(lines, message):
    with pytest.raises(GraphError, match=message):
        NetworkGraph(("1", "2"), lines)


def test_bus_params_invariants():
    with pytest.raises(ValueError):
        BusParams(0.0)
    with pytest.raises(ValueError):
        BusParams(1.0, Dv=-0.1)


def test_flow_examples():
    one = NetworkGraph(("1", "2"), [("1", "2", 1.0)])
    g = NetworkGraph(("1", "2"), [("1", "2", 2.5)])
    assert power_flow_nonlinear([0.0], g)[0] == 0.0
    assert power_flow_nonlinear([np.pi / 2], one)[0] == pytest.approx(1.0)
    assert power_flow_nonlinear([0.3], g)[0] == pytest.approx(2.5 * np.sin(0.3), rel=1e-15)
    assert power_flow_nonlinear([0.3], g)[0] == pytest.approx(0.7388, abs=1e-4)
    assert power_flow_linear([0.0], g)[0] == 0.0
    assert power_flow_linear([0.3], g)[0] == pytest.approx(0.75)


def test_flow_dimension_mismatch():
    g = NetworkGraph(("1", "2"), [("1", "2", 1.0)])
    with pytest.raises(ValueError):
        power_flow_linear([0.1, 0.2], g)
    with pytest.raises(ValueError):
        power_flow_nonlinear([], g)


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 8))
    buses = [str(i) for i in range(n)]
    lines = []
    for i in range(1, n):
        j = draw(st.integers(0, i - 1))
        a, b = (buses[i], buses[j]) if draw(st.booleans()) else (buses[j], buses[i])
        lines.append((a, b, draw(st.floats(0.1, 10.0))))
    existing = {frozenset(ln[:2]) for ln in lines}
    for _ in range(draw(st.integers(0, 4))):
        a, b = draw(st.sampled_from(buses)), draw(st.sampled_from(buses))
        if a != b and frozenset((a, b)) not in existing:
            existing.add(frozenset((a, b)))
            lines.append((a, b, draw(st.floats(0.1, 10.0))))
    return NetworkGraph(tuple(buses), tuple(lines))


@settings(max_examples=60, deadline=None)
@given(connected_graphs(), st.integers(0, 2**32 - 1))
def test_incidence_columns_and_flow_conservation(g, seed):
    H = build_incidence(g)
    np.testing.assert_array_equal(H.sum(axis=0), 0)
    assert np.all((H == 1).sum(axis=0) == 1) and np.all((H == -1).sum(axis=0) == 1)
    eta = np.random.default_rng(seed).uniform(-3, 3, g.n_lines)
    for flow in (power_flow_linear, power_flow_nonlinear):
        assert abs(np.sum(H @ flow(eta, g))) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(-0.1, 0.1))
def test_linear_flow_taylor_bound(B, eta):
    g = NetworkGraph(("1", "2"), [("1", "2", B)])
    gap = abs(power_flow_linear([eta], g)[0] - power_flow_nonlinear([eta], g)[0])
    assert gap <= B * abs(eta) ** 3 / 6 + 1e-15


def test_linear_flow_relative_error_small_angles():
    g = NetworkGraph(("1", "2"), [("1", "2", 1.7)])
    eta = np.linspace(-0.05, 0.05, 1001)
    eta = eta[eta != 0]
    lin = np.array([power_flow_linear([e], g)[0] for e in eta])
    non = np.array([power_flow_nonlinear([e], g)[0] for e in eta])
    assert np.max(np.abs(lin - non) / np.abs(non)) < 5e-4


def test_reversing_a_line_flips_angle_and_flow_only():
    net = cases.triangle()
    cfg = SimConfig(0.01, 5.0, "nonlinear", (Disturbance("2", 0.4, 0.5),))
    a = integrate(net, cfg, ConstantInertia(0.0))
    b = integrate(net.with_graph(net.graph.reversed_line(1)), cfg, ConstantInertia(0.0))
    np.testing.assert_allclose(a.omega, b.omega, atol=1e-12)
    np.testing.assert_allclose(a.eta[:, 1], -b.eta[:, 1], atol=1e-12)
    np.testing.assert_allclose(a.eta[:, [0, 2]], b.eta[:, [0, 2]], atol=1e-12)


def test_network_checks_sizes():
    g = NetworkGraph(("1", "2"), [("1", "2", 1.0)])
    sup = cases.two_bus().supplies[0]
    with pytest.raises(ValueError):
        PowerNetwork(g, (BusParams(1.0),), (sup, sup))
