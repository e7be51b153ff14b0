from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from karlsim import dbw as B

_AUTO = B.DbwState(B.OperationMode.AUTOMATED, engaged=True, key_access=True)


def test_override_disengages():
    assert not B.transition(_AUTO, "override").engaged


def test_shadow_engage_noop():
    s = B.DbwState(B.OperationMode.SHADOW, key_access=True)
    assert B.transition(s, "engage") == s
    assert not s.can_attached and s.sensors_powered


def test_estop_clear_engage():
    s = B.DbwState(B.OperationMode.AUTOMATED, key_access=True)
    log = B.run_script(["estop", "engage", "clear_estop", "engage"], s)
    assert [r.after.engaged for r in log] == [False, False, False, True]
    assert not log[1].applied


def test_reachable_states_hold_invariant():
    reach = B.reachable_states()
    assert all(s.invariant_holds() for s in reach)
    assert any(s.engaged for s in reach)


def test_exhaustive_transitions():
    for s in B.all_states():
        if not s.invariant_holds():
            continue
        for ev in B.DbwEvent:
            n = B.transition(s, ev)
            assert n.invariant_holds(), (s, ev)
            if ev in (B.DbwEvent.ESTOP, B.DbwEvent.OVERRIDE, B.DbwEvent.KEY_REMOVE, B.DbwEvent.POWER_OFF):
                assert not n.engaged


def test_unknown_event():
    with pytest.raises(ValueError):
        B.transition(B.DbwState(), "warp")


def test_decel_interpolation():
    env = B.SafetyEnvelope()
    assert env.decel_limit(3) == 5.0
    assert env.decel_limit(10) == pytest.approx(4.5)
    assert env.decel_limit(20) == 3.5
    assert env.decel_limit(30) == 3.5


def test_clamp_examples():
    env = B.SafetyEnvelope()
    assert B.clamp_request(B.ControlRequest(-6.0), 10, 0, 1e-3, env).accel == pytest.approx(-4.5)
    assert B.clamp_request(B.ControlRequest(-4.0), 3, 0, 1e-3, env).accel == -4.0
    req = B.ControlRequest(1.0, 0.0001)
    assert B.clamp_request(req, 10, 0.0001, 1e-3, env) == req


def test_kappa_rate_walk_back():
    env = B.SafetyEnvelope()
    # at 20 m/s kappa_max is 0.0075; start far above it
    out = B.clamp_request(B.ControlRequest(0, 0.2), 20, 0.1, 0.01, env)
    assert out.curvature == pytest.approx(0.1 - env.kappa_rate_max(20) * 0.01)


@settings(max_examples=200)
@given(st.floats(-20, 20), st.floats(-1, 1), st.floats(0, 40), st.floats(-0.2, 0.2))
def test_clamp_within_envelope(a, k, v, prev):
    env = B.SafetyEnvelope()
    out = B.clamp_request(B.ControlRequest(a, k), v, prev, 1e-3, env)
    assert -env.decel_limit(v) <= out.accel <= env.accel_limit(v)
    assert abs(out.curvature - prev) <= env.kappa_rate_max(v) * 1e-3 + 1e-12
    if abs(prev) <= env.kappa_max(v):
        assert abs(out.curvature) <= env.kappa_max(v) + 1e-12


def test_zero_request_at_rest():
    s = B.VehicleState()
    assert B.step_vehicle(s, B.ControlRequest(), 1e-3) == s


def test_circle_closure():
    assert B.circle_closure_error(0.1, 2 * math.pi, 1e-3) < 1e-6


def test_circle_radius():
    k, v, dt = 0.1, 2 * math.pi, 1e-3
    st_ = B.VehicleState(v=v, kappa=k)
    xs, ys = [], []
    for _ in range(10_000):
        st_ = B.step_vehicle(st_, B.ControlRequest(0, k), dt, 0.0)
        xs.append(st_.x)
        ys.append(st_.y)
    r = np.hypot(np.array(xs), np.array(ys) - 1 / k)
    assert np.allclose(r, 1 / k, atol=5e-3)


def test_stop_time_after_braking():
    st_ = B.VehicleState(v=20.0)
    t, dt, lag = 0.0, 1e-3, 0.1
    while st_.v > 0:
        st_ = B.step_vehicle(st_, B.ControlRequest(-3.5), dt, lag)
        t += dt
    assert t == pytest.approx(20 / 3.5 + lag, abs=0.01)


def test_moving_average_constant():
    assert np.allclose(B.measure_response(np.full(50, 2.5)), 2.5)


def test_moving_average_step_is_ramp():
    x = np.r_[np.zeros(30), np.ones(30)]
    y = B.measure_response(x, window=0.2, rate=50)
    kernel = np.ones(11) / 11
    interior = np.convolve(x, kernel, mode="valid")
    assert np.allclose(y[5:-5], interior)
    ramp = y[25:36]
    assert np.allclose(np.diff(ramp), 1 / 11)
    assert y[24] == 0 and y[35] == 1


def test_moving_average_nyquist():
    x = np.array([(-1) ** i for i in range(60)], dtype=float)
    assert np.all(np.abs(B.measure_response(x)[5:-5]) <= 1 / 11 + 1e-12)


def test_moving_average_too_short():
    with pytest.raises(ValueError):
        B.measure_response(np.zeros(5))


@pytest.mark.parametrize("v0, expected", [(3.0, -5.0), (10.0, -4.5), (20.0, -3.5)])
def test_step_settles_at_limit(v0, expected):
    rep = B.run_step_experiment(-10.0, v0)
    assert rep.target == pytest.approx(expected)
    assert abs(rep.settled - expected) <= 0.05
    assert rep.adherence and rep.passed


def test_nominal_step_within_limits():
    rep = B.run_step_experiment(-3.5, 20.0)
    assert rep.settled == pytest.approx(-3.5, abs=0.05) and rep.adherence


def test_zero_step_flat():
    rep = B.run_step_experiment(0.0, 10.0)
    assert np.all(rep.trace["a_measured"] == 0)


def test_current_speed_limit_mode():
    rep = B.run_step_experiment(-10.0, 20.0, limit_speed="current")
    assert rep.adherence
    assert rep.trace["limit"][-1] == 5.0


def test_step_csv(tmp_path):
    rep = B.run_step_experiment(-10.0, 3.0)
    p = tmp_path / "s.csv"
    rep.write_csv(p)
    assert p.read_text().splitlines()[0] == ",".join(B.STEP_COLUMNS)


@pytest.mark.parametrize("v", [5.0, 15.0])
def test_curvature_limits(v):
    rep = B.run_curvature_experiment(0.1, v)
    assert rep.rate_ok and rep.max_ok
    assert rep.final_kappa == pytest.approx(rep.target, rel=1e-3)
