import io

import numpy as np
import pytest

from quadstack.core import Command, QuadState
from quadstack.errors import BridgeError, ConfigError, InvalidArgumentError
from quadstack.pipeline import (
    COMMAND_LOG_HEADER,
    GuardConfig,
    GuardStatus,
    Guard,
    InnerKind,
    LogBridge,
    MpcParams,
    NullBridge,
    OuterKind,
    Pilot,
    PilotInputs,
    PipelineConfig,
    PositionSampler,
    SimBridge,
    build_config,
    guard_check,
    load_yaml,
    sample_position_based,
    sample_time_based,
)
from quadstack.pipeline.bridge import parse_command_log
from quadstack.references import HoverReference, generate_circle
from quadstack.simulator import Simulator


# -- configuration ---------------------------------------------------------------------------

def test_config_rejects_out_of_range_values():
    with pytest.raises(InvalidArgumentError):
        PipelineConfig(control_rate=20.0)
    with pytest.raises(InvalidArgumentError):
        PipelineConfig(control_rate=2000.0)
    with pytest.raises(InvalidArgumentError):
        PipelineConfig(outer="pid")
    with pytest.raises(InvalidArgumentError):
        GuardConfig(box_min=(0, 0, 0), box_max=(1, -1, 1))


def test_config_from_yaml_reports_line_of_bad_key():
    text = "control_rate: 200\nouter: mpc\nmpc:\n  N: 10\n  dt: -0.1\n"
    with pytest.raises(ConfigError) as info:
        build_config(PipelineConfig, *load_yaml(text, "p.yaml"), source="p.yaml")
    assert info.value.line == 5
    assert "mpc.dt" in str(info.value)
    with pytest.raises(ConfigError) as info:
        build_config(PipelineConfig, *load_yaml("control_rate: 100\nbogus: 1\n"))
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        load_yaml("a: [1, 2\n")


def test_config_from_yaml_builds_nested_values():
    cfg = build_config(PipelineConfig, *load_yaml("outer: mpc\ninner: indi\nmpc:\n  N: 8\n"))
    assert cfg.outer is OuterKind.MPC and cfg.inner is InnerKind.INDI and cfg.mpc.N == 8
    assert cfg.period == pytest.approx(0.01)


# -- samplers -------------------------------------------------------------------------------------

def test_time_sampler_clamps_and_samples_exactly(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    sps = sample_time_based(traj, traj.t_end + 1.0, 3, 0.05)
    for sp in sps:
        np.testing.assert_array_equal(sp.state.p, traj.positions[-1])
    k = 123
    sp = sample_time_based(traj, traj.times[k])[0]
    np.testing.assert_array_equal(sp.state.p, traj.positions[k])
    mid = 0.5 * (traj.times[k] + traj.times[k + 1])
    sp = sample_time_based(traj, mid)[0]
    np.testing.assert_allclose(sp.state.p, 0.5 * (traj.positions[k] + traj.positions[k + 1]), atol=1e-12)


def test_position_sampler_on_trajectory_returns_its_time(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    k = 40
    _, best = sample_position_based(traj, traj.positions[k], traj.times[k - 10], window=0.5)
    assert best == pytest.approx(traj.times[k], abs=1e-12)


def test_position_sampler_frozen_platform_advances_boundedly(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    sampler = PositionSampler(traj, window=0.2)
    p = traj.positions[0] + np.array([0.0, 0.0, 0.5])
    last = sampler.progress
    for k in range(50):
        sampler.sample(k * 0.01, p, 1, 0.05)
        assert last <= sampler.progress <= last + 0.2 + 1e-12
        last = sampler.progress
    # a platform frozen at the start never progresses
    assert last == pytest.approx(traj.t_start)


def test_position_sampler_projects_lateral_offset(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    k = 200
    center = np.mean(traj.positions, axis=0)
    radial = traj.positions[k] - center
    radial[2] = 0.0
    p = traj.positions[k] + radial / np.linalg.norm(radial)
    _, best = sample_position_based(traj, p, traj.times[k] - 0.3, window=0.5)
    assert best == pytest.approx(traj.times[k], abs=1e-9)


# -- guard --------------------------------------------------------------------------------------------

def test_guard_check_box_semantics():
    cfg = GuardConfig(box_min=(-1, -1, 0), box_max=(1, 1, 2))
    assert guard_check(QuadState(p=[0, 0, 1]), cfg) is GuardStatus.OK
    assert guard_check(QuadState(p=[0, 0, 2.0]), cfg) is GuardStatus.OK
    assert guard_check(QuadState(p=[-1, 1, 0.0]), cfg) is GuardStatus.OK
    assert guard_check(QuadState(p=[0, 0, 2.001]), cfg) is GuardStatus.VIOLATION
    assert guard_check(QuadState(p=[np.nan, 0, 1]), cfg) is GuardStatus.VIOLATION
    assert guard_check(QuadState(p=[0, 0, 5.0]), GuardConfig(enabled=False)) is GuardStatus.OK


def test_guard_latches_until_reset():
    guard = Guard(GuardConfig(box_min=(-1, -1, 0), box_max=(1, 1, 2)))
    assert guard.check(QuadState(p=[0, 0, 3])) is GuardStatus.VIOLATION
    assert guard.check(QuadState(p=[0, 0, 1])) is GuardStatus.VIOLATION
    np.testing.assert_array_equal(guard.entry_state.p, [0, 0, 3])
    guard.reset()
    assert guard.check(QuadState(p=[0, 0, 1])) is GuardStatus.OK


# -- bridges ------------------------------------------------------------------------------------------

def test_sim_bridge_without_latency_applies_next_step(model):
    sim = Simulator(model)
    bridge = SimBridge(sim)
    cmd = Command.from_thrusts(0.0, [1.0, 2.0, 3.0, 4.0])
    ack = bridge.send(cmd, 0.0)
    assert ack.applies_at == pytest.approx(0.0)
    sim.step()
    assert sim.applied_command.same_as(cmd)


def test_log_bridge_writes_one_row_per_command():
    buf = io.StringIO()
    bridge = LogBridge(buf)
    bridge.send(Command.from_thrusts(0.01, [1.0, 2.0, 3.0, 4.0]))
    bridge.send(Command.from_collective_thrust(0.02, 7.0, [0.1, 0.2, 0.3]))
    lines = buf.getvalue().splitlines()
    assert lines[0] == COMMAND_LOG_HEADER and len(lines) == 3
    rows = parse_command_log(buf.getvalue())
    assert rows[0][1] == "thrusts" and rows[1][1] == "ctbr"
    np.testing.assert_array_equal(rows[0][2][:4], [1, 2, 3, 4])
    np.testing.assert_array_equal(rows[1][2][4:], [7.0, 0.1, 0.2, 0.3])


def test_closed_bridge_raises():
    bridge = NullBridge()
    bridge.close()
    with pytest.raises(BridgeError):
        bridge.send(Command.from_thrusts(0.0, np.ones(4)))
    with pytest.raises(InvalidArgumentError):
        NullBridge().send(Command.from_thrusts(0.0, [np.nan, 1, 1, 1]))


# -- pilot --------------------------------------------------------------------------------------------

def hover_pilot(model, **kwargs):
    ref = HoverReference(np.array([0.0, 0.0, 1.0]), 0.0, model)
    return Pilot(model=model, reference=ref, **kwargs)


def test_pilot_hover_command(model):
    pilot = hover_pilot(model)
    cmd = pilot.step(0.0, PilotInputs(states=[QuadState(p=[0, 0, 1.0])]))
    assert cmd.collective_thrust == pytest.approx(model.mass * model.g, abs=1e-3)
    np.testing.assert_allclose(cmd.bodyrate, 0.0, atol=1e-12)


def test_pilot_sends_exactly_one_command_per_step(model):
    bridge = NullBridge()
    pilot = hover_pilot(model, bridge=bridge)
    for k in range(20):
        pilot.step(k * 0.01, PilotInputs(states=[QuadState(t=k * 0.01, p=[0, 0, 1.0])]))
    assert bridge.sent == 20 and pilot.cycles == 20


def test_pilot_guard_switches_to_backup_once(model):
    cfg = PipelineConfig(outer="mpc", inner="indi", mpc=MpcParams(N=5))
    guard = GuardConfig(box_min=(-1, -1, 0), box_max=(1, 1, 2))
    pilot = hover_pilot(model, config=cfg, guard=guard)
    pilot.step(0.0, PilotInputs(states=[QuadState(p=[0, 0, 1.0])]))
    assert pilot.config.outer is OuterKind.MPC
    for k in range(1, 5):
        pilot.step(k * 0.01, PilotInputs(states=[QuadState(t=k * 0.01, p=[0, 0, 2.5])]))
    kinds = [e.kind for e in pilot.events]
    assert kinds.count("guard_violation") == 1 and kinds.count("backup_active") == 1
    assert pilot.backup_active
    assert pilot.config == guard.backup
    assert pilot.config.outer is OuterKind.GEOMETRIC and pilot.config.inner is InnerKind.NONE
    np.testing.assert_array_equal(pilot.reference.position_at(0.0), [0, 0, 2.5])


def test_pilot_estimator_timeout_commands_safety_hover(model):
    pilot = hover_pilot(model)
    cmd = pilot.step(0.0)
    assert pilot.degraded
    assert cmd.collective_thrust == pytest.approx(model.mass * model.g)
    np.testing.assert_array_equal(cmd.bodyrate, 0.0)
    pilot.step(0.01, PilotInputs(states=[QuadState(t=0.01, p=[0, 0, 1.0])]))
    assert not pilot.degraded
    pilot.step(0.05)
    assert pilot.degraded
    assert [e.kind for e in pilot.events].count("estimator_timeout") == 2


def test_pilot_feedthrough_and_takeover(model):
    pilot = hover_pilot(model)
    pilot.enable_feedthrough()
    ext = Command.from_thrusts(0.0, [1.0, 1.5, 2.0, 2.5])
    state = QuadState(p=[0.2, 0, 1.0])
    cmd = pilot.step(0.0, PilotInputs(states=[state], commands=[ext]))
    np.testing.assert_array_equal(cmd.thrusts, ext.thrusts)
    cmd = pilot.step(0.1, PilotInputs(states=[state.replace(t=0.1)]))
    assert cmd.is_single_rotor and pilot.feedthrough
    cmd = pilot.step(0.11, PilotInputs(states=[state.replace(t=0.11)]))
    assert not pilot.feedthrough and not cmd.is_single_rotor
    assert "feedthrough_takeover" in [e.kind for e in pilot.events]
    np.testing.assert_array_equal(pilot.reference.position_at(0.0), [0.2, 0, 1.0])


def test_pilot_is_deterministic(model):
    def run():
        pilot = hover_pilot(model, config=PipelineConfig(outer="mpc", inner="indi", mpc=MpcParams(N=5)))
        out = []
        for k in range(30):
            s = QuadState(t=k * 0.01, p=[0.01 * k, 0, 1.0 - 0.005 * k], w=[0.1, 0, 0])
            out.append(pilot.step(k * 0.01, PilotInputs(states=[s])).thrusts)
        return np.array(out)

    np.testing.assert_array_equal(run(), run())


def test_pilot_queue_drops_oldest(model):
    pilot = hover_pilot(model, queue_size=4)
    for k in range(6):
        pilot.push(QuadState(t=k * 1e-3, p=[0, 0, 1.0 + k]))
    assert pilot.dropped == 2
    pilot.step(0.006)
    assert pilot.last_estimate.p[2] == pytest.approx(6.0)
