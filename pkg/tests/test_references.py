import io
import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from quadstack.core import QuadrotorModel, allocate, quat_conjugate, quat_log, quat_multiply, quat_to_rotation
from quadstack.errors import InvalidArgumentError, SingularityError, TrajectoryFormatError
from quadstack.references import (
    HEADER,
    FlatOutput,
    HoverReference,
    PolynomialReference,
    SampledTrajectory,
    VelocityReference,
    flatness_state,
    generate_circle,
    generate_lemniscate,
    polynomial_derivatives,
    sample_polynomial,
    trajectory_load,
    trajectory_save,
)


def random_polynomial_reference(rng, degree=7, duration=2.0, model=None):
    # higher-order terms shrink so the demanded thrust stays within the rotor limits
    scale = 0.5 / 2.0 ** np.arange(degree + 1)
    cx, cy, cz = (rng.normal(size=degree + 1) * scale for _ in range(3))
    cz[0] += 2.0
    cyaw = rng.normal(scale=0.3, size=4)
    return PolynomialReference(cx, cy, cz, cyaw, 0.0, duration, model or QuadrotorModel())


def random_trajectory(rng, n=None):
    n = n or int(rng.integers(2, 40))
    times = np.cumsum(rng.uniform(1e-3, 0.1, n)) + rng.uniform(-5, 5)
    table = rng.normal(scale=10.0, size=(n, 27))
    table[:, 0] = times
    q = rng.normal(size=(n, 4))
    table[:, 4:8] = q / np.linalg.norm(q, axis=1, keepdims=True)
    table[:, 23:27] = rng.uniform(0, 9.5, (n, 4))
    return SampledTrajectory.from_table(table)


# -- flatness -------------------------------------------------------------------

def test_flatness_hover_fixed_point(model):
    s = flatness_state(FlatOutput(p=np.array([1.0, 2.0, 3.0])), model)
    np.testing.assert_allclose(s.q, [1, 0, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(s.w, 0.0)
    np.testing.assert_array_equal(s.tau, 0.0)
    assert abs(s.fd.sum() - model.mass * model.g) < 1e-9


def test_flatness_circle_tilt(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    sp = traj.setpoints[len(traj.setpoints) // 2]
    assert np.linalg.norm(sp.state.a) == pytest.approx(6.25, rel=1e-9)
    z_b = quat_to_rotation(sp.state.q)[:, 2]
    assert math.acos(z_b[2]) == pytest.approx(math.atan(6.25 / 9.81), abs=1e-9)
    assert math.degrees(math.atan(6.25 / 9.81)) == pytest.approx(32.5, abs=0.05)


def test_flatness_singularity_names_timestamp(model):
    with pytest.raises(SingularityError) as exc:
        flatness_state(FlatOutput(t=1.25, a=np.array([0, 0, -model.g])), model)
    assert exc.value.t == 1.25
    assert "1.25" in str(exc.value)


def test_flatness_finite_difference_consistency(model, rng):
    h = 1e-4
    for _ in range(5):
        ref = random_polynomial_reference(rng, model=model)
        for t in rng.uniform(0.2, 1.8, 5):
            sm, s0, sp = (sample_polynomial(ref, t + d).state for d in (-h, 0.0, h))
            np.testing.assert_allclose((sp.p - sm.p) / (2 * h), s0.v, atol=1e-3)
            np.testing.assert_allclose((sp.v - sm.v) / (2 * h), s0.a, atol=1e-2)


def test_flatness_bodyrate_and_wrench_against_numerical_oracle(model, rng):
    """Bodyrate from R^T dR/dt, angular acceleration from differentiating it, wrench from Newton-Euler."""
    h = 1e-5
    J = np.diag(model.inertia)
    for _ in range(5):
        ref = random_polynomial_reference(rng, model=model)
        for t in rng.uniform(0.2, 1.8, 3):
            sm, s0, sp = (sample_polynomial(ref, t + d).state for d in (-h, 0.0, h))
            w_fd = (quat_log(quat_multiply(quat_conjugate(sm.q), sp.q))) / (2 * h)
            np.testing.assert_allclose(w_fd, s0.w, atol=1e-5)
            np.testing.assert_allclose((sp.w - sm.w) / (2 * h), s0.tau, atol=1e-3)
            wrench = allocate(s0.fd, model)
            assert wrench.collective_thrust == pytest.approx(
                model.mass * np.linalg.norm(s0.a + [0, 0, model.g]), rel=1e-10)
            np.testing.assert_allclose(wrench.torque, J @ s0.tau + np.cross(s0.w, J @ s0.w), atol=1e-10)


# -- polynomial references ---------------------------------------------------------

def test_constant_polynomial_is_hover(model):
    ref = PolynomialReference([1.0], [2.0], [3.0], duration=5.0, model=model)
    for t in (0.0, 2.5, 5.0, 7.0):
        s = sample_polynomial(ref, t).state
        np.testing.assert_array_equal(s.p, [1, 2, 3])
        np.testing.assert_array_equal(s.v, 0.0)
        np.testing.assert_allclose(s.fd, model.mass * model.g / 4, rtol=1e-12)


def test_linear_polynomial(model):
    ref = PolynomialReference([0.0, 1.0], [0.0], [0.0], duration=5.0, model=model)
    s = sample_polynomial(ref, 2.0).state
    np.testing.assert_allclose(s.p, [2, 0, 0])
    np.testing.assert_allclose(s.v, [1, 0, 0])
    np.testing.assert_allclose(s.a, 0.0)


def test_polynomial_derivatives_against_numpy(rng):
    coeffs = rng.normal(size=10)
    tau = 0.37
    poly = Polynomial(coeffs)
    expected = [poly.deriv(k)(tau) if k else poly(tau) for k in range(5)]
    got = polynomial_derivatives(coeffs, tau, 4)
    np.testing.assert_allclose(got, expected, rtol=1e-6)
    # independent numeric differentiation of the scalar polynomial
    h = 1e-5
    assert got[1] == pytest.approx((poly(tau + h) - poly(tau - h)) / (2 * h), rel=1e-6)


def test_polynomial_clamping(model):
    moving = PolynomialReference([0.0, 1.0], [0.0], [1.0], duration=2.0, model=model)
    s = sample_polynomial(moving, 3.0)
    assert s.t == 3.0
    np.testing.assert_allclose(s.state.p, [2, 0, 1])
    np.testing.assert_allclose(s.state.v, [1, 0, 0])
    at_rest = PolynomialReference([0.0, 0.0, 3.0, -1.0], [0.0], [1.0], duration=2.0, model=model)
    s = sample_polynomial(at_rest, 3.0)
    np.testing.assert_allclose(s.state.p, [4, 0, 1])
    np.testing.assert_array_equal(s.state.a, 0.0)
    before = sample_polynomial(moving, -1.0)
    np.testing.assert_allclose(before.state.p, [0, 0, 1])


def test_polynomial_validation(model):
    with pytest.raises(InvalidArgumentError):
        PolynomialReference([0.0] * 13, [0.0], [0.0], duration=1.0)
    with pytest.raises(InvalidArgumentError):
        PolynomialReference([0.0], [0.0], [0.0], [0.0] * 7, duration=1.0)
    with pytest.raises(InvalidArgumentError):
        PolynomialReference([], [0.0], [0.0], duration=1.0)
    with pytest.raises(InvalidArgumentError):
        PolynomialReference([0.0], [0.0], [0.0], duration=0.0)


def test_hover_and_velocity_references(model):
    hover = HoverReference(np.array([1.0, 2.0, 3.0]), 0.5, model)
    sp = hover.setpoint_at(4.0)
    assert sp.t == 4.0 and sp.state.yaw == pytest.approx(0.5)
    np.testing.assert_allclose(sp.input.thrusts, model.mass * model.g / 4)
    vel = VelocityReference(np.array([1.0, 0, 0]), 0.2, t_start=1.0, duration=2.0, p0=np.array([0, 0, 1.0]),
                            model=model)
    s = vel.setpoint_at(2.0).state
    np.testing.assert_allclose(s.p, [1, 0, 1], atol=1e-12)
    np.testing.assert_allclose(s.v, [1, 0, 0], atol=1e-12)
    assert s.yaw == pytest.approx(0.2)
    with pytest.raises(InvalidArgumentError):
        VelocityReference(np.zeros(3), duration=0.0)


# -- generators --------------------------------------------------------------------

def test_circle_period_and_radius(model):
    traj = generate_circle(center=(1.0, -2.0), radius=4.0, speed=5.0, z=1.5, laps=1, model=model)
    assert traj.duration == pytest.approx(2 * math.pi * 4 / 5, abs=0.01)
    assert 2 * math.pi * 4 / 5 == pytest.approx(5.0265, abs=1e-4)
    xy = traj.positions[:, :2] - [1.0, -2.0]
    np.testing.assert_allclose(np.linalg.norm(xy, axis=1), 4.0, atol=1e-9)
    np.testing.assert_allclose(traj.positions[:, 2], 1.5)
    steps = np.diff(traj.times)
    np.testing.assert_allclose(steps[:-1], 0.01, atol=1e-9)
    assert 0 < steps[-1] <= 0.01 + 1e-9


def test_slow_circle_is_near_hover(model):
    traj = generate_circle(radius=4.0, speed=0.01, laps=0.01, model=model)
    tilts = [math.acos(quat_to_rotation(s.state.q)[2, 2]) for s in traj.setpoints]
    assert max(tilts) < 0.01


def test_fast_circle_and_lemniscate_feasible(model):
    for traj in (generate_circle(radius=5.0, speed=7.0, model=model),
                 generate_lemniscate(amplitude=5.0, speed=7.0, model=model)):
        fd = np.array([s.state.fd for s in traj.setpoints])
        assert np.max(np.abs(fd)) <= model.f_max
        assert np.min(fd) >= model.f_min


def test_lemniscate_amplitude(model):
    traj = generate_lemniscate(amplitude=5.0, speed=0.5, model=model)
    assert np.max(np.abs(traj.positions[:, 0])) == pytest.approx(5.0, abs=1e-6)


def test_lemniscate_rejects_zero_speed(model):
    with pytest.raises(InvalidArgumentError):
        generate_lemniscate(amplitude=5.0, speed=0.0, model=model)
    with pytest.raises(InvalidArgumentError):
        generate_circle(radius=0.0, speed=1.0, model=model)


def test_ramped_circle_starts_and_ends_at_rest(model):
    traj = generate_circle(radius=4.0, speed=5.0, ramp=1.0, model=model)
    np.testing.assert_allclose(traj.setpoints[0].state.v, 0.0, atol=1e-12)
    np.testing.assert_allclose(traj.setpoints[-1].state.v, 0.0, atol=1e-9)
    assert np.max(np.linalg.norm(traj.table[:, 8:11], axis=1)) == pytest.approx(5.0, rel=1e-6)


@pytest.mark.parametrize("make", [
    lambda m: generate_circle(radius=4.0, speed=5.0, model=m),
    lambda m: generate_lemniscate(amplitude=5.0, speed=7.0, model=m),
])
def test_generated_trajectory_finite_differences(make, model):
    tab = make(model).table
    # second-order differences also on the shorter final step
    v_fd = np.gradient(tab[:, 1:4], tab[:, 0], axis=0, edge_order=2)
    assert np.max(np.abs(v_fd - tab[:, 8:11])) < 1e-2


# -- sampled trajectory and file format ---------------------------------------------

def test_sampled_trajectory_interpolation(rng):
    traj = random_trajectory(rng, 10)
    t = traj.times
    np.testing.assert_array_equal(traj.setpoint_at(t[3]).state.p, traj.setpoints[3].state.p)
    mid = 0.5 * (t[3] + t[4])
    np.testing.assert_allclose(traj.position_at(mid), 0.5 * (traj.positions[3] + traj.positions[4]), atol=1e-12)
    np.testing.assert_array_equal(traj.setpoint_at(t[0] - 1).state.p, traj.positions[0])
    np.testing.assert_array_equal(traj.setpoint_at(t[-1] + 1).state.p, traj.positions[-1])


def test_sampled_trajectory_validation(rng):
    traj = random_trajectory(rng, 3)
    with pytest.raises(InvalidArgumentError):
        SampledTrajectory(traj.setpoints[:1])
    with pytest.raises(InvalidArgumentError):
        SampledTrajectory([traj.setpoints[1], traj.setpoints[0]])


def test_round_trip_circle_bitwise_times(tmp_path, model):
    traj = generate_circle(model=model)
    path = tmp_path / "circle.csv"
    trajectory_save(traj, path)
    back = trajectory_load(path)
    np.testing.assert_array_equal(back.times, traj.times)
    assert np.max(np.abs(back.table - traj.table)) <= 1e-12
    text = path.read_bytes()
    assert b"\r" not in text and text.startswith(HEADER.encode() + b"\n")


def test_round_trip_random_trajectories(rng):
    for _ in range(100):
        traj = random_trajectory(rng)
        buf = io.StringIO()
        trajectory_save(traj, buf)
        back = trajectory_load(io.StringIO(buf.getvalue()))
        assert np.max(np.abs(back.table - traj.table)) <= 1e-12


def test_minimal_hand_written_file():
    zeros = ",".join(["0"] * 15)
    rows = [f"{t},0,0,0,1,0,0,0,{zeros},1.839375,1.839375,1.839375,1.839375" for t in (0, 0.01)]
    traj = trajectory_load(io.StringIO(HEADER + "\n" + "\n".join(rows) + "\n"))
    assert len(traj.setpoints) == 2
    for sp in traj.setpoints:
        np.testing.assert_array_equal(sp.state.p, 0.0)
        np.testing.assert_array_equal(sp.state.q, [1, 0, 0, 0])
        np.testing.assert_allclose(sp.input.thrusts.sum(), 0.75 * 9.81)


def _file_with(rows):
    return io.StringIO(HEADER + "\n" + "\n".join(rows) + "\n")


def _row(t):
    return f"{t}," + ",".join(["0", "0", "0", "1"] + ["0"] * 22)


@pytest.mark.parametrize("text,line", [
    ("t,px\n" + _row(0) + "\n", 1),
    (HEADER + "\n" + _row(0.0) + "\n" + _row(0.01) + "\n" + _row(0.005) + "\n", 4),
    (HEADER + "\n" + _row(0.0) + "\n" + _row(0.01) + ",1\n", 3),
    (HEADER + "\n" + _row(0.0) + "\n" + _row(0.01).replace("1", "x", 1) + "\n", 3),
    (HEADER + "\n" + _row(0.0) + "\n", 2),
])
def test_malformed_files_report_line(text, line):
    with pytest.raises(TrajectoryFormatError) as exc:
        trajectory_load(io.StringIO(text))
    assert exc.value.line == line
