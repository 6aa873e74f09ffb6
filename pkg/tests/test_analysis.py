import math

import numpy as np
import pytest
from scipy.integrate import quad

from varinertia import (
    BangBangInertia,
    BusParams,
    ConstantInertia,
    Disturbance,
    EquilibriumError,
    FirstOrderSupply,
    NetworkGraph,
    PowerNetwork,
    SimConfig,
    SystemState,
    check_dissipation,
    classify_run,
    equilibrium_residual,
    find_equilibrium,
    gamma_point,
    integrate,
    lyapunov_series,
    lyapunov_value,
    strictness_constant,
)
from varinertia import cases


_NO_P = np.zeros((1, 1))


def _pair(pL, B=1.0):
    sup = FirstOrderSupply(1.0, 9.0, 1.0).to_lti()  # dc gain 10
    g = NetworkGraph(("1", "2"), [("1", "2", B)])
    return PowerNetwork(g, (BusParams(1.0, 0.0, pL[0]), BusParams(1.0, 0.0, pL[1])), (sup, sup))


def _storage(net):
    certs = [strictness_constant(s) for s in net.bus_supplies]
    return [c.rho_margined for c in certs], [c.P for c in certs]


def test_unloaded_equilibrium_is_origin():
    eq = find_equilibrium(_pair((0.0, 0.0)))
    assert eq.omega_sync == 0.0
    assert np.all(eq.eta == 0) and np.all(eq.xs == 0)


def test_balanced_two_bus_equilibrium():
    eq = find_equilibrium(_pair((0.5, -0.5)))
    assert eq.omega_sync == pytest.approx(0.0, abs=1e-14)
    assert eq.p[0] == pytest.approx(-0.5)
    assert eq.eta[0] == pytest.approx(math.asin(-0.5))
    assert eq.eta[0] == pytest.approx(-0.5236, abs=1e-4)
    assert eq.assumption1_ok


def test_loaded_two_bus_frequency():
    net = _pair((0.5, 0.5))
    for mode in ("nonlinear", "linear"):
        eq = find_equilibrium(net, mode=mode)
        assert eq.omega_sync == pytest.approx(-0.05, abs=1e-12)
        assert equilibrium_residual(net, eq) < 1e-8


def test_overloaded_line_has_no_equilibrium():
    with pytest.raises(EquilibriumError, match="overloaded"):
        find_equilibrium(_pair((2.0, -2.0)))
    eq = find_equilibrium(_pair((2.0, -2.0)), mode="linear")
    assert eq.eta[0] == pytest.approx(-2.0)


def test_meshed_equilibrium_reports_cycles():
    eq = find_equilibrium(cases.triangle())
    assert eq.cycle_rank == 1


def test_gamma_point_two_bus():
    net = _pair((0.0, 0.0))
    gp = gamma_point(net, 0.01, "1")
    np.testing.assert_allclose(gp.s, [-0.1, -0.1])
    np.testing.assert_allclose(gp.omega, [0.01, 0.01])
    # Bus 2 is balanced by a flow of 0.1 towards it; bus 1 covers the whole
    # network shortfall.
    assert gp.p[0] == pytest.approx(0.1)
    assert gp.eta[0] == pytest.approx(0.1)
    assert gp.slack_injection == pytest.approx(-0.2)


@pytest.mark.parametrize("name", sorted(cases.corpus()))
def test_gamma_point_slack_invariance(name):
    net = cases.corpus()[name]
    eq = find_equilibrium(net, mode="linear")
    for omega_bar in (eq.omega_sync, eq.omega_sync - 0.03):
        pts = [gamma_point(net, omega_bar, b) for b in net.graph.buses]
        for gp in pts:
            np.testing.assert_array_equal(gp.omega, pts[0].omega)
            assert np.max(np.abs(gp.xs - pts[0].xs), initial=0.0) < 1e-10
    for b in net.graph.buses:
        gp = gamma_point(net, eq.omega_sync, b)
        assert abs(gp.slack_injection) < 1e-8
        np.testing.assert_allclose(gp.p, eq.p, atol=1e-10)


def test_lyapunov_examples():
    net = cases.path3()
    eq = find_equilibrium(net)
    _, P = _storage(net)
    V = lyapunov_value(net, eq.as_state(), eq, P)
    assert V == (0.0, 0.0, 0.0, 0.0)
    x = eq.as_state()
    x.omega = x.omega.copy()
    x.omega[1] += 0.1
    V, vf, vp, vj = lyapunov_value(net, x, eq, P)
    assert V == pytest.approx(0.5 * net.M0[1] * 0.01, rel=1e-12) and vp == 0 and vj == 0
    x.Mv = np.array([0.0, 3.0, 0.0])
    assert lyapunov_value(net, x, eq, P)[0] == pytest.approx(0.5 * (net.M0[1] + 3.0) * 0.01)


def test_angle_energy_closed_form():
    net = _pair((0.0, 0.0))
    eq = find_equilibrium(net)
    x = SystemState(np.array([0.2]), np.zeros(2), np.zeros(2), np.zeros(2))
    assert lyapunov_value(net, x, eq, [_NO_P, _NO_P])[2] == pytest.approx(1 - math.cos(0.2))
    lin = find_equilibrium(net, mode="linear")
    assert lyapunov_value(net, x, lin, [_NO_P, _NO_P], mode="linear")[2] == pytest.approx(0.02)


def test_angle_energy_matches_quadrature():
    rng = np.random.default_rng(2)
    for _ in range(100):
        star, eta = rng.uniform(-math.pi / 2, math.pi / 2, 2)
        B = rng.uniform(0.1, 10.0)
        g = NetworkGraph(("1", "2"), [("1", "2", B)])
        sup = FirstOrderSupply(1.0, 1.0, 1.0).to_lti()
        net = PowerNetwork(g, (BusParams(1.0), BusParams(1.0)), (sup, sup))
        eq = find_equilibrium(net)
        eq = type(eq)(0.0, np.array([star]), eq.xs, eq.s, eq.p, "nonlinear", True)
        x = SystemState(np.array([eta]), np.zeros(2), np.zeros(2), np.zeros(2))
        closed = lyapunov_value(net, x, eq, [_NO_P, _NO_P])[2]
        ref, _ = quad(lambda f: B * (math.sin(f) - math.sin(star)), star, eta, epsabs=1e-13, epsrel=1e-13)
        assert closed == pytest.approx(ref, abs=1e-9)


def test_energy_is_a_strict_local_minimum():
    net = cases.governor_pair()
    eq = find_equilibrium(net)
    _, P = _storage(net)
    rng = np.random.default_rng(5)
    base = eq.as_state()
    for _ in range(200):
        d = rng.normal(size=net.n_lines + net.n_buses + net.n_supply_states)
        d *= rng.uniform(1e-4, 0.1) / np.linalg.norm(d)
        E, N = net.n_lines, net.n_buses
        x = SystemState(base.eta + d[:E], base.omega + d[E:E + N], base.xs + d[E + N:], np.zeros(N))
        assert lyapunov_value(net, x, eq, P)[0] > 0


def test_missing_storage_warns():
    net = cases.path3()
    eq = find_equilibrium(net)
    x = eq.as_state()
    x.xs = x.xs + 0.1
    with pytest.warns(RuntimeWarning, match="missing"):
        lyapunov_value(net, x, eq, [None, None, None])
    with pytest.warns(RuntimeWarning):
        lyapunov_value(net, x, eq, None)


def _ring(policy, T=30.0):
    net = cases.ring4()
    cfg = SimConfig(0.01, T, "nonlinear", (Disturbance("3", 2.0, 1.0),))
    traj = integrate(net, cfg, policy)
    eq = find_equilibrium(net, pL=traj.pL[-1])
    return net, traj, eq


def test_constant_inertia_energy_decreases():
    net, traj, eq = _ring(ConstantInertia(2.0))
    rho, P = _storage(net)
    rep = check_dissipation(net, traj, eq, rho, P)
    assert rep.monotone_ok and rep.positive_jumps == 0 and rep.bound_violations == 0
    V, *_ = lyapunov_series(net, traj, eq, P)
    np.testing.assert_allclose(rep.V, V)
    assert rep.V[-1] < 1e-2 * rep.V[101:].max()


def test_bang_bang_energy_jumps_at_switch_on():
    net, traj, eq = _ring(BangBangInertia(37.5))
    rho, P = _storage(net)
    rep = check_dissipation(net, traj, eq, rho, P)
    assert not rep.monotone_ok and rep.positive_jumps >= 5
    on = {float(traj.t[i + 1]) for i in np.flatnonzero(np.diff(traj.Mv[:, 0]) > 0)}
    assert set(rep.jump_times) <= on
    assert set(rep.summary()) >= {"monotone_ok", "tolerance", "positive_jumps"}


def test_classification_labels():
    net, traj, eq = _ring(ConstantInertia(0.0), T=60.0)
    c = classify_run(traj, eq)
    assert c.label == "convergent" and 1.0 < c.settling_time < 60.0
    net = cases.two_bus()
    eq = find_equilibrium(net)
    still = integrate(net, SimConfig(0.01, 2.0), None, eq.as_state())
    c = classify_run(still, eq)
    assert c.label == "convergent" and c.settling_time == 0.0 and c.max_deviation < 1e-12
    _, bang, eq = _ring(BangBangInertia(37.5), T=60.0)
    assert classify_run(bang, eq).label == "oscillatory"
    with pytest.raises(ValueError):
        classify_run(integrate(net, SimConfig(0.01, 0.05)), 0.0)


def test_escape_radius_marks_divergence():
    net, traj, eq = _ring(ConstantInertia(0.0), T=20.0)
    assert classify_run(traj, eq, escape_radius=1e-3).label == "divergent"
