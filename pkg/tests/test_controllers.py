import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from quadstack.core import Command, QuadState, allocate, quat_exp, quat_from_yaw
from quadstack.errors import InvalidArgumentError
from quadstack.pipeline import (
    GeometricGains,
    IndiConfig,
    IndiController,
    LowPass2,
    MpcController,
    MpcParams,
    control_geometric,
    control_indi,
    control_mpc,
    sample_time_based,
    tilt_prioritized_error,
)
from quadstack.references import HoverReference, generate_circle


def hover_setpoints(model, p=(0.0, 0.0, 1.0), n=21, dt=0.05, yaw=0.0):
    return sample_time_based(HoverReference(np.array(p, dtype=float), yaw, model), 0.0, n, dt)


# -- geometric ----------------------------------------------------------------------------

def test_geometric_zero_error_returns_feedforward(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    for sp in traj.setpoints[::37]:
        out = control_geometric(sp.state, sp, GeometricGains(), model)
        assert out.command.collective_thrust == pytest.approx(sp.state.fd.sum(), abs=1e-6 * model.mass * model.g)
        np.testing.assert_allclose(out.command.bodyrate, sp.state.w, atol=1e-9)
        assert not out.singular


def test_geometric_altitude_error_plug_in(model):
    sp = hover_setpoints(model, n=1)[0]
    state = QuadState(p=[0.0, 0.0, 0.0])
    gains = GeometricGains(kp=(10, 10, 10), kv=(6, 6, 6))
    out = control_geometric(state, sp, gains, model)
    assert out.command.collective_thrust == pytest.approx(0.75 * (9.81 + 10.0), abs=1e-12)
    assert 0.75 * (9.81 + 10.0) == pytest.approx(14.8575)


def test_geometric_yaw_error_rate(model):
    sp = hover_setpoints(model, n=1, yaw=math.radians(10.0))[0]
    state = QuadState(p=[0, 0, 1.0])
    out = control_geometric(state, sp, GeometricGains(kq_z=5.0), model)
    rotvec = (Rotation.from_euler("z", 0.0).inv() * Rotation.from_euler("z", 10, degrees=True)).as_rotvec()
    assert out.command.bodyrate[2] == pytest.approx(5.0 * rotvec[2], abs=1e-12)
    assert out.command.bodyrate[2] == pytest.approx(0.873, abs=1e-3)
    np.testing.assert_allclose(out.command.bodyrate[:2], 0.0, atol=1e-12)


def test_geometric_clamps_thrust_and_rates(model):
    sp = hover_setpoints(model, p=(0, 0, 100.0), n=1)[0]
    out = control_geometric(QuadState(), sp, GeometricGains(), model)
    assert out.command.collective_thrust == pytest.approx(4 * model.f_max)
    sp = hover_setpoints(model, n=1, yaw=3.0)[0]
    out = control_geometric(QuadState(p=[0, 0, 1.0]), sp, GeometricGains(kq_z=100.0), model)
    assert abs(out.command.bodyrate[2]) == pytest.approx(model.w_max)


def test_geometric_singularity_holds_previous_attitude(model):
    sp = hover_setpoints(model, n=1)[0]
    falling = sp.state.replace(a=np.array([0, 0, -model.g]))
    from quadstack.core import Setpoint

    prev = quat_exp(np.array([0.1, 0.0, 0.0]))
    out = control_geometric(sp.state, Setpoint(falling, sp.input), GeometricGains(), model, prev)
    assert out.singular
    np.testing.assert_array_equal(out.q_des, prev)


def test_tilt_prioritized_split_recomposes(rng):
    for _ in range(200):
        q = quat_exp(rng.normal(size=3))
        q_des = quat_exp(rng.normal(size=3))
        e_xy, e_z = tilt_prioritized_error(q, q_des)
        assert abs(e_xy[2]) < 1e-12 and abs(e_z[0]) < 1e-15 and abs(e_z[1]) < 1e-15
        recomposed = Rotation.from_rotvec(e_xy) * Rotation.from_rotvec(e_z)
        expected = Rotation.from_quat(np.r_[q[1:], q[0]]).inv() * Rotation.from_quat(np.r_[q_des[1:], q_des[0]])
        assert (recomposed.inv() * expected).magnitude() < 1e-9


# -- MPC --------------------------------------------------------------------------------------

def test_mpc_hover_fixed_point(model):
    state = QuadState(p=[0, 0, 1.0])
    res = control_mpc(state, hover_setpoints(model), model)
    np.testing.assert_allclose(res.command.thrusts, model.mass * model.g / 4, atol=1e-4)
    assert res.iterations <= 3 and res.converged


def test_mpc_climbs_towards_reference_above(model):
    state = QuadState(p=[0, 0, 0.0])
    res = control_mpc(state, hover_setpoints(model, p=(0, 0, 1.0)), model)
    assert res.command.thrusts.sum() > model.mass * model.g
    initial = abs(1.0 - state.p[2])
    terminal = np.linalg.norm(res.predicted_states[-1, 0:3] - [0, 0, 1.0])
    assert terminal < initial


def test_mpc_large_step_respects_box(model):
    res = control_mpc(QuadState(), hover_setpoints(model, p=(50.0, -50.0, 50.0)), model)
    assert np.all(res.predicted_inputs >= model.f_min) and np.all(res.predicted_inputs <= model.f_max)
    assert np.all(res.command.thrusts >= model.f_min) and np.all(res.command.thrusts <= model.f_max)


def test_mpc_random_solves_respect_box(model, rng):
    params = MpcParams(N=5)
    ctrl = MpcController(model, params)
    for _ in range(2000):
        state = QuadState(p=rng.uniform(-5, 5, 3), q=quat_exp(rng.normal(scale=0.5, size=3)),
                          v=rng.normal(scale=3, size=3), w=rng.normal(scale=3, size=3))
        sps = hover_setpoints(model, p=rng.uniform(-5, 5, 3), n=6, dt=params.dt)
        u = ctrl.solve(state, sps).command.thrusts
        assert np.all(u >= model.f_min) and np.all(u <= model.f_max)


def test_mpc_rejects_invalid_inputs(model):
    with pytest.raises(InvalidArgumentError):
        control_mpc(QuadState(p=[np.nan, 0, 0]), hover_setpoints(model), model)
    with pytest.raises(InvalidArgumentError):
        control_mpc(QuadState(), hover_setpoints(model, n=3), model)
    with pytest.raises(InvalidArgumentError):
        MpcParams(N=4)
    with pytest.raises(InvalidArgumentError):
        MpcParams(w_position=(0, 0, 0), w_orientation=(0, 0, 0), w_velocity=(0, 0, 0), w_bodyrate=(0, 0, 0))


def test_mpc_warm_start_reduces_iterations(model):
    ctrl = MpcController(model)
    ref = HoverReference(np.array([0.5, 0.0, 1.0]), 0.0, model)
    state = QuadState(p=[0, 0, 1.0])
    first = ctrl.solve(state, sample_time_based(ref, 0.0, 21, 0.05))
    second = ctrl.solve(state.replace(t=0.01), sample_time_based(ref, 0.01, 21, 0.05))
    assert second.iterations <= first.iterations


def test_mpc_delay_prediction_without_history_uses_hover(model):
    ctrl = MpcController(model, MpcParams(delay_compensation=0.05))
    state = QuadState(p=[0, 0, 1.0], v=[1.0, 0, 0])
    pred = ctrl.predict(state, 0.05)
    assert pred.t == pytest.approx(0.05)
    np.testing.assert_allclose(pred.p, [0.05, 0, 1.0], atol=1e-12)


def test_mpc_delay_prediction_uses_issued_commands(model):
    delay = 0.03
    ctrl = MpcController(model, MpcParams(delay_compensation=delay))
    hover = model.mass * model.g / 4
    ctrl._issued.extend([(-0.02, np.full(4, hover + 0.5)), (-0.01, np.full(4, hover + 0.5))])
    pred = ctrl.predict(QuadState(p=[0, 0, 1.0]), delay)
    # commands issued at -0.02/-0.01 act on [0.01, 0.03): 2 N extra thrust for 20 ms
    acc = 2.0 / model.mass
    assert pred.p[2] - 1.0 == pytest.approx(0.5 * acc * 0.02**2, rel=1e-9)


# -- INDI ---------------------------------------------------------------------------------------

def test_indi_zero_increment_equals_plain_allocation(model):
    J = np.array(model.inertia)
    state = QuadState(w=[0.5, -0.3, 0.2])
    outer = Command.from_thrusts(0.0, [2.0, 1.5, 1.8, 2.2])
    wrench = allocate(outer.thrusts, model)
    alpha_des = (wrench.torque - np.cross(state.w, J * state.w)) / J
    tau_meas = wrench.torque
    out = control_indi(outer, state, alpha_des, tau_meas, model)
    np.testing.assert_allclose(out.command.thrusts, outer.thrusts, atol=1e-12)
    assert not out.clamped and not out.fallback


def test_indi_saturation_clamps_only_the_saturated_rotor(model):
    state = QuadState()
    outer = Command.from_collective_thrust(0.0, 4 * 9.0, [0.0, 0.0, 0.0])
    big = np.array([0.0, 0.0, 0.05])
    unclamped = np.linalg.solve(model.allocation_matrix, np.r_[36.0, big])
    out = control_indi(outer, state, alpha_meas=np.zeros(3), tau_meas=big, model=model)
    assert out.clamped
    sat = unclamped > model.f_max
    assert sat.any()
    np.testing.assert_allclose(out.command.thrusts[sat], model.f_max)
    np.testing.assert_allclose(out.command.thrusts[~sat], unclamped[~sat], atol=1e-12)


def test_indi_missing_estimate_falls_back(model):
    out = control_indi(Command.from_collective_thrust(0.0, 7.0, np.zeros(3)), QuadState(), None, None, model)
    assert out.fallback
    np.testing.assert_allclose(out.command.thrusts, 1.75, atol=1e-12)
    ctrl = IndiController(model, IndiConfig(), 100.0)
    first = ctrl.control(Command.from_collective_thrust(0.0, 7.0, np.zeros(3)), QuadState())
    assert first.fallback and ctrl.fallbacks == 1


def test_lowpass_matches_scipy_lfilter(rng):
    from scipy.signal import butter, lfilter, lfilter_zi

    x = rng.normal(size=(500, 3))
    f = LowPass2(40.0, 1000.0, 3)
    got = np.array([f(v) for v in x])
    b, a = butter(2, 40.0, fs=1000.0)
    expected = np.column_stack([lfilter(b, a, x[:, i], zi=lfilter_zi(b, a) * x[0, i])[0] for i in range(3)])
    np.testing.assert_allclose(got, expected, atol=1e-12)
