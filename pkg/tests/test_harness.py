import io

import numpy as np
import pytest

from quadstack.core import QuadState
from quadstack.errors import ConfigError, InvalidArgumentError, UsageError
from quadstack.harness import (
    ExperimentConfig,
    TrajectorySpec,
    compute_rmse,
    latency_sweep,
    parse_experiment_config,
    run_experiment,
)
from quadstack.harness.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_OK, main
from quadstack.pipeline import EstimatorConfig, PipelineConfig
from quadstack.references import HoverReference, generate_circle

CIRCLE = TrajectorySpec(kind="circle", radius=4.0, speed=5.0, laps=2.0)

UNSTABLE_YAML = """\
pipeline:
  geometric:
    kp: [30, 30, 30]
    kv: [0, 0, 0]
trajectory:
  kind: circle
  radius: 4
  speed: 5
  ramp: 1
latency: 0.05
duration: 15
"""


# -- metrics --------------------------------------------------------------------------------------

def test_rmse_of_reference_itself_is_zero(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    log = [sp.state for sp in traj.setpoints]
    assert compute_rmse(log, traj).rmse == 0.0


def test_rmse_constant_offset(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    log = [sp.state.replace(p=sp.state.p + [0.1, 0, 0]) for sp in traj.setpoints]
    report = compute_rmse(log, traj)
    assert report.rmse == pytest.approx(0.1, abs=1e-12)
    assert report.rmse <= report.max_error + 1e-15
    assert report.rmse_axes[0] == pytest.approx(0.1, abs=1e-12)


def test_rmse_sinusoidal_error(model):
    ref = HoverReference(np.array([0.0, 0.0, 1.0]), 0.0, model)
    A, t = 0.3, np.arange(100000) * 1e-4
    log = np.column_stack([t, A * np.sin(2 * np.pi * t), np.zeros_like(t), np.ones_like(t)])
    assert compute_rmse(log, ref).rmse == pytest.approx(A / np.sqrt(2.0), abs=1e-6)


def test_rmse_requires_overlap(model):
    traj = generate_circle(radius=4.0, speed=5.0, model=model)
    with pytest.raises(InvalidArgumentError):
        compute_rmse([QuadState(t=traj.t_end + 1.0)], traj)
    with pytest.raises(InvalidArgumentError):
        compute_rmse([], traj)


# -- experiments --------------------------------------------------------------------------------

def test_hover_experiment_regulates():
    res = run_experiment(ExperimentConfig(duration=2.0))
    assert res.metrics.rmse < 1e-3
    assert not res.aborted and res.metrics.guard_events == 0
    assert len(res.state_log) == 2001 and len(res.command_log) == 201


def test_circle_experiment_without_latency_has_finite_rmse():
    res = run_experiment(ExperimentConfig(trajectory=CIRCLE))
    assert np.isfinite(res.metrics.rmse) and res.metrics.rmse < 0.1
    assert res.metrics.guard_events == 0 and not res.aborted


def test_circle_latency_ordering():
    low = run_experiment(ExperimentConfig(trajectory=CIRCLE, latency=0.035)).metrics.rmse
    high = run_experiment(ExperimentConfig(trajectory=CIRCLE, latency=0.075)).metrics.rmse
    assert high > low


def test_latency_sweep_is_monotone():
    results = latency_sweep(ExperimentConfig(trajectory=CIRCLE), [0.0, 0.02, 0.04, 0.075])
    rmse = [m.rmse for _, m in results]
    assert all(a <= b for a, b in zip(rmse, rmse[1:]))


def test_latency_sweep_repeated_latency_is_deterministic(tmp_path):
    cfg = ExperimentConfig(duration=1.0, output_dir=str(tmp_path))
    (a, ma), (b, mb) = latency_sweep(cfg, [0.02, 0.02])
    assert ma == mb
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 3


def test_latency_sweep_rejects_short_lists():
    with pytest.raises(UsageError):
        latency_sweep(ExperimentConfig(), [])
    with pytest.raises(UsageError):
        latency_sweep(ExperimentConfig(), [0.01])


def test_guard_stops_destabilized_vehicle():
    cfg = parse_experiment_config(UNSTABLE_YAML)
    res = run_experiment(cfg)
    kinds = [e.kind for e in res.events]
    assert res.aborted and "guard_violation" in kinds and "backup_active" in kinds
    lo = np.array(cfg.guard.box_min) - 1.0
    hi = np.array(cfg.guard.box_max) + 1.0
    final = res.state_log[-1, 1:4]
    assert np.all(final >= lo) and np.all(final <= hi)


def test_experiment_config_validation():
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig(duration=0.0)
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig(latency=-0.01)
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig(integrator="leapfrog")
    with pytest.raises(InvalidArgumentError):
        ExperimentConfig(pipeline=PipelineConfig(control_rate=300.0))
    with pytest.raises(ConfigError) as info:
        parse_experiment_config("duration: 5\npipeline:\n  control_rate: 10\n", source="exp.yaml")
    assert info.value.line == 3 and "pipeline.control_rate" in str(info.value)


def test_experiment_writes_outputs(tmp_path):
    run_experiment(ExperimentConfig(duration=0.5, output_dir=str(tmp_path)))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["commands.csv", "metrics.csv", "states.csv", "summary.txt"]
    assert (tmp_path / "states.csv").read_text().count("\n") == 502


def test_experiment_logs_are_byte_identical(tmp_path):
    ekf = PipelineConfig(estimator=EstimatorConfig(kind="ekf"))
    cfg = ExperimentConfig(trajectory=CIRCLE, duration=2.0, pipeline=ekf, imu_noise=True, seed=7)
    run_experiment(cfg.replace(output_dir=str(tmp_path / "a")))
    run_experiment(cfg.replace(output_dir=str(tmp_path / "b")))
    for name in ("states.csv", "commands.csv", "metrics.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# -- CLI -----------------------------------------------------------------------------------------------

def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    return main(list(argv), out, err), out.getvalue(), err.getvalue()


def test_cli_run_and_metrics(tmp_path):
    cfg = tmp_path / "hover.yaml"
    cfg.write_text("duration: 0.5\n")
    code, out, _ = run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"), "--seed", "3")
    assert code == EXIT_OK and "position RMSE" in out
    code, out, _ = run_cli("metrics", "--states", str(tmp_path / "out" / "states.csv"), "--config", str(cfg))
    assert code == EXIT_OK and out.startswith("metric")


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("duration: 1\npipeline:\n  control_rate: 5\n")
    code, _, err = run_cli("run", "--config", str(cfg))
    assert code == EXIT_CONFIG and "line 3" in err
    code, _, _ = run_cli("run", "--config", str(tmp_path / "missing.yaml"))
    assert code == EXIT_CONFIG
    code, _, _ = run_cli("run", "--config", str(cfg), "--integrator", "leapfrog")
    assert code == EXIT_CONFIG
    code, _, _ = run_cli("sweep", "--config", str(cfg), "--latencies", "0.01")
    assert code == EXIT_CONFIG


def test_cli_guard_abort_exit_code(tmp_path):
    cfg = tmp_path / "unstable.yaml"
    cfg.write_text(UNSTABLE_YAML)
    code, out, _ = run_cli("run", "--config", str(cfg))
    assert code == EXIT_GUARD and "aborted to backup" in out


def test_cli_trajectory_commands(tmp_path):
    path = tmp_path / "circle.csv"
    code, _, _ = run_cli("gen-traj", "--kind", "circle", "--radius", "4", "--speed", "5", "--out", str(path))
    assert code == EXIT_OK and path.exists()
    code, out, _ = run_cli("validate-traj", str(path))
    assert code == EXIT_OK and out.endswith("ok\n")
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,trajectory\n")
    code, _, err = run_cli("validate-traj", str(bad))
    assert code == EXIT_CONFIG and "bad.csv:1:" in err


def test_shipped_example_configs_parse():
    from pathlib import Path

    from quadstack.harness import load_experiment_config

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert paths
    for path in paths:
        cfg = load_experiment_config(path)
        assert cfg.trajectory.kind in ("hover", "circle", "lemniscate", "file")
