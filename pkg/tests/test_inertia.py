import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varinertia import (
    BangBangInertia,
    ConstantInertia,
    DestabilizerInertia,
    Disturbance,
    PiecewiseLinearInertia,
    RandomizedInertia,
    RateLimitedInertia,
    SimConfig,
    bang_bang,
    check_assumption4,
    find_equilibrium,
    gamma_point,
    integrate,
    randomized_setpoint_update,
    rate_limited_rhs,
)
from varinertia import cases


class _FixedDraw:
    def __init__(self, r):
        self.r = r

    def random(self, shape):
        return np.full(shape, self.r)


def test_bang_bang_rule():
    assert bang_bang(np.zeros(3), 10.0) == 0.0
    assert bang_bang([0.03, 0.0, 0.0], 10.0, 0.02) == 10.0
    assert bang_bang([0.02, 0.02, 0.02], 10.0, 0.02) == 0.0
    assert bang_bang([0.0, -0.05], 4.0) == 4.0


def test_rate_limited_rhs_examples():
    assert rate_limited_rhs(0.0, 1e6, 28.0, 100.0, 1e-4) == pytest.approx(55.9999)
    assert rate_limited_rhs(3.0, 3.0, 28.0) == 0.0
    assert rate_limited_rhs(5.0, 0.0, 28.0, 100.0) == pytest.approx(-500.0)
    assert rate_limited_rhs(0.0, 0.0, 28.0) == 0.0
    np.testing.assert_allclose(rate_limited_rhs([0.0, 1.0], [2.0, 0.0], [0.5, 0.5], 100.0, 0.0), [1.0, -100.0])


def test_rate_limited_rejects_small_rho():
    with pytest.raises(ValueError, match="rate bound"):
        RateLimitedInertia(1.0, rho=4e-5, epsilon=1e-4).bind(cases.two_bus(), 0.01)


def test_randomized_update_examples():
    np.testing.assert_allclose(randomized_setpoint_update([0.0], _FixedDraw(0.3), 10.0), [0.0])
    np.testing.assert_allclose(randomized_setpoint_update([0.0], _FixedDraw(0.7), 10.0), [5.0])
    np.testing.assert_allclose(randomized_setpoint_update([7.0], _FixedDraw(0.3), 10.0), [2.0])


def test_randomized_update_is_fair_and_seeded():
    def walk(seed):
        rng = np.random.default_rng(seed)
        u = np.full(1, 1e9)
        seq = []
        for _ in range(10_000):
            u = randomized_setpoint_update(u, rng, 2.0)
            seq.append(u[0])
        return np.array(seq)

    a, b = walk(11), walk(11)
    np.testing.assert_array_equal(a, b)
    ups = np.mean(np.diff(np.concatenate([[1e9], a])) > 0)
    assert 0.47 <= ups <= 0.53


def test_check_assumption4_examples():
    h = 0.01
    flat = np.ones((100, 2))
    rep = check_assumption4(flat, [1.0, 1.0], h)
    assert rep.compliant and rep.lipschitz == 0.0
    jump = np.zeros((10, 1))
    jump[5:] = 3.0
    rep = check_assumption4(jump, [1.0], h)
    assert not rep.compliant
    bus, t, rate = rep.violations[0]
    assert bus == 0 and t == pytest.approx(0.04) and rate == pytest.approx(300.0)


def _ring_run(policy, T=20.0, model="nonlinear"):
    net = cases.ring4()
    cfg = SimConfig(0.01, T, model, (Disturbance("3", 2.0, 1.0),))
    return net, integrate(net, cfg, policy)


def _rho(net):
    return np.array([s.D for s in net.bus_supplies])


@settings(max_examples=8, deadline=None)
@given(st.floats(0.0, 200.0), st.integers(0, 2**31 - 1))
def test_rate_limited_traces_are_compliant(Ma, seed):
    net = cases.ring4()
    for pol in (RateLimitedInertia(Ma, _rho(net)), RandomizedInertia(Ma, _rho(net), seed=seed)):
        _, traj = _ring_run(pol, T=8.0)
        rep = check_assumption4(traj.M, _rho(net), traj.h)
        assert rep.compliant, rep
        assert np.all(traj.Mv >= 0)
        assert np.all(traj.M >= net.M0)


def test_rate_limited_reaches_setpoint_and_caps_growth():
    net = cases.ring4()
    _, traj = _ring_run(RateLimitedInertia(37.5, _rho(net)), T=10.0)
    rate = np.diff(traj.Mv, axis=0) / traj.h
    assert np.all(rate <= 2 * _rho(net) - 1e-4 + 1e-9)
    assert traj.Mv.max() > 0


def test_bang_bang_trace_jumps():
    net, traj = _ring_run(BangBangInertia(37.5), T=20.0)
    rep = check_assumption4(traj.M, _rho(net), traj.h)
    assert not rep.compliant
    assert max(r for _, _, r in rep.violations) == pytest.approx(37.5 / traj.h)
    assert set(np.unique(traj.Mv)) <= {0.0, 37.5}


def test_bang_bang_subset_of_buses():
    _, traj = _ring_run(BangBangInertia(10.0, buses=["2"]), T=5.0)
    assert np.all(traj.Mv[:, [0, 2, 3]] == 0.0)
    assert traj.Mv[:, 1].max() == 10.0


def test_randomized_runs_repeat_with_seed():
    _, a = _ring_run(RandomizedInertia(37.5, 1.0, seed=4), T=6.0)
    _, b = _ring_run(RandomizedInertia(37.5, 1.0, seed=4), T=6.0)
    _, c = _ring_run(RandomizedInertia(37.5, 1.0, seed=5), T=6.0)
    np.testing.assert_array_equal(a.omega, b.omega)
    assert not np.array_equal(a.u, c.u)
    assert np.all(np.isin(a.u / (0.5 * 37.5), np.arange(20)))


def test_piecewise_profile():
    pol = PiecewiseLinearInertia([0.0, 1.0, 3.0], {"2": [0.0, 4.0, 2.0]})
    pol.bind(cases.two_bus(), 0.01)
    np.testing.assert_allclose(pol.mv(0.5, None), [0.0, 2.0])
    np.testing.assert_allclose(pol.mv(5.0, None), [0.0, 2.0])
    np.testing.assert_allclose(pol.declared_rate_bound(), [0.0, 4.0])
    with pytest.raises(ValueError):
        PiecewiseLinearInertia([0.0, 0.0], {"1": [0.0, 1.0]})
    with pytest.raises(ValueError):
        PiecewiseLinearInertia([0.0, 1.0], {"1": [0.0, -1.0]})


def test_constant_rejects_negative():
    with pytest.raises(ValueError):
        ConstantInertia(-1.0).bind(cases.two_bus(), 0.01)


def _attack(net, offset, T, **kw):
    eq = find_equilibrium(net, mode="linear")
    gp = gamma_point(net, eq.omega_sync + offset, "1")
    pol = DestabilizerInertia("1", eq.omega_sync, **kw)
    traj = integrate(net, SimConfig(0.01, T, "linear"), pol, gp.as_state())
    return pol, traj


def test_destabilizer_at_equilibrium_never_escapes():
    pol, traj = _attack(cases.underdamped_two_bus(), 0.0, 60.0, M_hold=1e6, growth=2.0)
    assert traj.status == "completed" and not pol.escaped


def test_destabilizer_on_damped_network_reports_no_divergence():
    pol, traj = _attack(cases.two_bus(pL=(0.0, 0.0)), 1e-3, 200.0, M_hold=1e6, growth=2.0)
    assert not pol.escaped
    assert traj.status == "completed"


def test_destabilizer_profile_is_lipschitz_and_nonnegative():
    pol, traj = _attack(cases.underdamped_two_bus(), 1e-3, 300.0, M_hold=1e6, growth=2.0, ramp=0.5)
    slope = np.abs(np.diff(traj.Mv[:, 0])) / traj.h
    assert slope.max() <= 1e6 / 0.5 * (1 + 1e-9)
    assert np.all(traj.Mv >= 0)
    assert np.all(traj.Mv[:, 1] == 0)
    assert {"HOLD", "RELEASE"} <= set(traj.phase)


def test_destabilizer_growth_must_exceed_one():
    with pytest.raises(ValueError):
        DestabilizerInertia("1", growth=1.0)
