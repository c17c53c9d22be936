"""Closed-loop experiments: pilot + simulator, latency sweeps, metrics and thrust-stand tests."""

from __future__ import annotations

import dataclasses
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from ..core import Command, QuadrotorModel, QuadState
from ..errors import ConfigError, InvalidArgumentError, UsageError
from ..pipeline.bridge import COMMAND_LOG_HEADER, SimBridge, command_log_row
from ..pipeline.config import EstimatorKind, GuardConfig, PipelineConfig, build_config, load_yaml
from ..pipeline.pilot import Pilot, PilotInputs
from ..references.generators import generate_circle, generate_lemniscate
from ..references.io import trajectory_load
from ..references.types import HoverReference, Reference, SampledTrajectory
from ..simulator.imu import ImuSimulator
from ..simulator.models import DEFAULT_LOWLEVEL_GAINS, IntegratorKind
from ..simulator.sim import STATE_LOG_COLUMNS, Simulator

SIM_DT = 0.001
IMU_RATE = 500.0
# thrust stand force sampling; fine enough that release quantization stays well below 1 ms
THRUST_STAND_DT = 1e-4


@dataclass(frozen=True)
class TrajectorySpec:
    """Where the reference comes from: a generator (circle, lemniscate, hover) or a CSV file."""

    kind: str = "hover"
    center: tuple = (0.0, 0.0)
    radius: float = 4.0
    amplitude: float = 5.0
    speed: float = 5.0
    z: float = 1.0
    laps: float = 1.0
    ramp: float = 0.0
    position: tuple = (0.0, 0.0, 1.0)
    yaw: float = 0.0
    path: str | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in ("hover", "circle", "lemniscate", "file"):
            raise InvalidArgumentError(f"unknown trajectory kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "file" and not self.path:
            raise InvalidArgumentError("trajectory kind 'file' requires a path")

    def build(self, model: QuadrotorModel, base_dir: str | None = None) -> Reference:
        if self.kind == "hover":
            return HoverReference(np.asarray(self.position, dtype=float), float(self.yaw), model)
        if self.kind == "circle":
            return generate_circle(self.center, self.radius, self.speed, self.z, self.laps, self.ramp, model)
        if self.kind == "lemniscate":
            return generate_lemniscate(self.center, self.amplitude, self.speed, self.z, self.laps, self.ramp, model)
        path = self.path
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return trajectory_load(path)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one closed-loop run.

    ``duration`` defaults to the trajectory duration (10 s for hover).
    ``imu_noise`` enables sensor noise on the simulated IMU (used by the EKF
    estimator, seeded by ``seed``).
    """

    model: QuadrotorModel = field(default_factory=QuadrotorModel)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    guard: GuardConfig = field(default_factory=GuardConfig)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    duration: float | None = None
    latency: float = 0.0
    integrator: str = "rk4"
    seed: int = 0
    output_dir: str | None = None
    imu_noise: bool = False
    lowlevel_gains: tuple = DEFAULT_LOWLEVEL_GAINS
    disturbance_torque: tuple = (0.0, 0.0, 0.0)
    disturbance_force: tuple = (0.0, 0.0, 0.0)
    base_dir: str | None = None

    def __post_init__(self):
        if self.duration is not None and not self.duration > 0:
            raise InvalidArgumentError("duration must be positive")
        if not (self.latency >= 0 and math.isfinite(self.latency)):
            raise InvalidArgumentError("latency must be non-negative")
        IntegratorKind.parse(self.integrator)
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgumentError("seed must be a non-negative integer")
        object.__setattr__(self, "seed", int(self.seed))
        for name in ("lowlevel_gains", "disturbance_torque", "disturbance_force"):
            v = tuple(float(x) for x in np.reshape(getattr(self, name), -1))
            if len(v) != 3 or not all(math.isfinite(x) for x in v):
                raise InvalidArgumentError(f"{name} must be 3 finite values")
            object.__setattr__(self, name, v)
        steps = 1.0 / (self.pipeline.control_rate * SIM_DT)
        if abs(steps - round(steps)) > 1e-9:
            raise InvalidArgumentError("control_rate must divide the 1 kHz simulation rate")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def load_experiment_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read an :class:`ExperimentConfig` from a YAML file (errors carry file and line)."""
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=path) from None
    return parse_experiment_config(text, source=path, overrides=overrides)


def parse_experiment_config(text: str, source: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    data, lines = load_yaml(text, source)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1, source=source)
    data = dict(data)
    if source is not None and "base_dir" not in data:
        data["base_dir"] = os.path.dirname(os.path.abspath(source))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return build_config(ExperimentConfig, data, lines, source=source)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    max_error: float
    max_speed: float
    max_acceleration: float
    rmse_axes: tuple
    guard_events: int = 0
    solver_iterations: int = 0
    solver_warnings: int = 0
    samples: int = 0

    def __post_init__(self):
        if self.rmse < 0 or self.rmse > self.max_error + 1e-12 * max(1.0, self.max_error):
            raise InvalidArgumentError("inconsistent metrics: need 0 <= rmse <= max_error")

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("rmse", self.rmse), ("max_error", self.max_error), ("max_speed", self.max_speed),
            ("max_acceleration", self.max_acceleration), ("rmse_x", self.rmse_axes[0]),
            ("rmse_y", self.rmse_axes[1]), ("rmse_z", self.rmse_axes[2]),
            ("guard_events", self.guard_events), ("solver_iterations", self.solver_iterations),
            ("solver_warnings", self.solver_warnings), ("samples", self.samples),
        ]

    def to_csv(self) -> str:
        return "metric,value\n" + "".join(f"{k},{float(v):.17g}\n" for k, v in self.rows())


def _reference_positions(reference: Reference, times):
    if isinstance(reference, SampledTrajectory):
        return reference.positions_at(times)
    return np.array([reference.position_at(t) for t in times])


def compute_rmse(state_log, reference: Reference, **extra) -> MetricsReport:
    """Time-associated tracking metrics.

    ``state_log`` is either a sequence of :class:`QuadState` or an array whose
    columns follow :data:`~quadstack.simulator.STATE_LOG_COLUMNS` (at least
    ``t, px, py, pz``). Only samples within the reference time span are used.
    """
    if isinstance(state_log, np.ndarray):
        log = np.atleast_2d(state_log)
        t, p = log[:, 0], log[:, 1:4]
        v = log[:, 8:11] if log.shape[1] >= 11 else np.zeros_like(p)
        a = log[:, 14:17] if log.shape[1] >= 17 else np.zeros_like(p)
    else:
        states = list(state_log)
        if not states:
            raise InvalidArgumentError("state log is empty")
        t = np.array([s.t for s in states])
        p = np.array([s.p for s in states])
        v = np.array([s.v for s in states])
        a = np.array([s.a for s in states])
    if t.size == 0:
        raise InvalidArgumentError("state log is empty")
    mask = (t >= reference.t_start - 1e-12) & (t <= reference.t_end + 1e-12)
    if not np.any(mask):
        raise InvalidArgumentError(
            f"state log [{t.min():g}, {t.max():g}] s does not overlap the reference "
            f"[{reference.t_start:g}, {reference.t_end:g}] s"
        )
    err = p[mask] - _reference_positions(reference, t[mask])
    e2 = np.sum(err * err, axis=1)
    return MetricsReport(
        rmse=float(np.sqrt(np.mean(e2))),
        max_error=float(np.sqrt(np.max(e2))),
        max_speed=float(np.max(np.linalg.norm(v[mask], axis=1))),
        max_acceleration=float(np.max(np.linalg.norm(a[mask], axis=1))),
        rmse_axes=tuple(float(x) for x in np.sqrt(np.mean(err * err, axis=0))),
        samples=int(np.count_nonzero(mask)),
        **extra,
    )


# ---------------------------------------------------------------------------
# Closed-loop run
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    metrics: MetricsReport
    state_log: np.ndarray
    command_log: list[str]
    events: list
    reference: Reference
    aborted: bool
    bodyrate_error: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def steady_bodyrate_error(self, fraction: float = 0.25) -> float:
        """Mean norm of the bodyrate tracking error over the final ``fraction`` of the run.

        The error is ``w_cmd - w`` between the outer loop's bodyrate command and
        the true bodyrate, recorded each cycle the outer loop commands
        bodyrates (NaN rows otherwise are ignored).
        """
        if not 0 < fraction <= 1:
            raise InvalidArgumentError("fraction must lie in (0, 1]")
        e = self.bodyrate_error
        tail = e[len(e) - max(1, int(round(fraction * len(e)))):]
        tail = tail[np.all(np.isfinite(tail), axis=1)]
        if len(tail) == 0:
            raise InvalidArgumentError("no bodyrate commands were recorded")
        return float(np.mean(np.linalg.norm(tail, axis=1)))

    def states_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(STATE_LOG_COLUMNS) + "\n")
        for row in self.state_log:
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        return buf.getvalue()

    def commands_csv(self) -> str:
        return COMMAND_LOG_HEADER + "\n" + "".join(r + "\n" for r in self.command_log)

    def summary(self, cfg: ExperimentConfig) -> str:
        m = self.metrics
        lines = [
            "quadstack experiment summary",
            f"trajectory: {cfg.trajectory.kind}",
            f"pipeline: outer={cfg.pipeline.outer.value} inner={cfg.pipeline.inner.value} "
            f"estimator={cfg.pipeline.estimator.kind.value} sampler={cfg.pipeline.sampler.kind.value} "
            f"rate={cfg.pipeline.control_rate:g} Hz",
            f"latency: {cfg.latency * 1e3:g} ms, integrator: {IntegratorKind.parse(cfg.integrator).name.lower()}, "
            f"seed: {cfg.seed}",
            f"samples: {m.samples}",
            f"position RMSE: {m.rmse:.6f} m (x {m.rmse_axes[0]:.6f}, y {m.rmse_axes[1]:.6f}, z {m.rmse_axes[2]:.6f})",
            f"max position error: {m.max_error:.6f} m",
            f"max speed: {m.max_speed:.3f} m/s, max acceleration: {m.max_acceleration:.3f} m/s^2",
            f"guard events: {m.guard_events}{' (aborted to backup)' if self.aborted else ''}",
            f"solver iterations: {m.solver_iterations}, solver warnings: {m.solver_warnings}",
            "events:",
        ]
        lines += [f"  t={e.t:.3f} {e.kind} {e.detail}".rstrip() for e in self.events] or ["  none"]
        return "\n".join(lines) + "\n"

    def write(self, cfg: ExperimentConfig, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in (
            ("states.csv", self.states_csv()),
            ("commands.csv", self.commands_csv()),
            ("metrics.csv", self.metrics.to_csv()),
            ("summary.txt", self.summary(cfg)),
        ):
            with open(out / name, "w", newline="\n", encoding="ascii") as fh:
                fh.write(text)


def run_experiment(cfg: ExperimentConfig, *, write: bool = True) -> ExperimentResult:
    """Fly the configured pipeline against the simulator.

    The simulator runs at 1 kHz; the pilot runs at the pipeline control rate
    and receives ground truth (feed-through estimator) or IMU samples plus a
    pose at the control rate (EKF). The vehicle starts on the reference at its
    first setpoint with the rotors spun up to the setpoint thrusts; that
    setpoint's thrusts are also held until the first command arrives through
    the delay line. States are logged every simulation step, commands once per
    control cycle.
    """
    model = cfg.model
    reference = cfg.trajectory.build(model, cfg.base_dir)
    t0 = reference.t_start
    duration = cfg.duration
    if duration is None:
        duration = reference.t_end - t0 if math.isfinite(reference.t_end) else 10.0
    first = reference.setpoint_at(t0)
    init = first.state.replace(f=first.input.thrusts, fd=first.input.thrusts)
    use_ekf = cfg.pipeline.estimator.kind is EstimatorKind.EKF
    imu = None
    if use_ekf:
        est = cfg.pipeline.estimator
        scale = 1.0 if cfg.imu_noise else 0.0
        imu = ImuSimulator(rate=IMU_RATE, gyro_noise=est.gyro_noise * scale, accel_noise=est.accel_noise * scale,
                           gyro_bias_walk=est.gyro_bias_walk * scale, accel_bias_walk=est.accel_bias_walk * scale,
                           seed=cfg.seed, g=model.g)
    sim = Simulator(
        model, init, dt=SIM_DT, integrator=cfg.integrator, latency=cfg.latency, idle_command=first.input,
        lowlevel_gains=cfg.lowlevel_gains, disturbance_torque=cfg.disturbance_torque,
        disturbance_force=cfg.disturbance_force, imu=imu,
    )
    pilot = Pilot(cfg.pipeline, model, SimBridge(sim), cfg.guard, reference)
    if use_ekf:
        pilot.estimator.initialize(init)

    steps_per_cycle = int(round(1.0 / (cfg.pipeline.control_rate * SIM_DT)))
    n_steps = int(round(duration / SIM_DT))
    rows = []
    commands = []
    rate_err = []
    for k in range(n_steps + 1):
        if k % steps_per_cycle == 0:
            now = sim.time
            truth = sim.state
            if use_ekf:
                inputs = PilotInputs(states=[QuadState(t=now, p=truth.p, q=truth.q)], imu=sim.drain_imu())
            else:
                inputs = PilotInputs(states=[truth])
            cmd = pilot.step(now, inputs)
            commands.append(command_log_row(cmd, now))
            outer = pilot.last_outer_command
            if outer is not None and not outer.is_single_rotor:
                rate_err.append(outer.bodyrate - truth.w)
            else:
                rate_err.append(np.full(3, np.nan))
        rows.append(sim.log_row())
        if k < n_steps:
            sim.step()
    state_log = np.array(rows)
    guard_events = sum(1 for e in pilot.events if e.kind == "guard_violation")
    mpc = [p for p in (pilot.mpc,) if p is not None]
    metrics = compute_rmse(
        state_log, reference, guard_events=guard_events,
        solver_iterations=sum(m.iterations for m in mpc), solver_warnings=sum(m.warnings for m in mpc),
    )
    result = ExperimentResult(metrics, state_log, commands, list(pilot.events), reference,
                              aborted=pilot.backup_active, bodyrate_error=np.array(rate_err).reshape(-1, 3))
    if write and cfg.output_dir:
        result.write(cfg, cfg.output_dir)
    return result


def latency_sweep(cfg: ExperimentConfig, latencies) -> list[tuple[float, MetricsReport]]:
    """Run ``cfg`` once per latency with the same seed; writes ``sweep.csv`` if an output directory is set."""
    latencies = [float(x) for x in latencies]
    if len(latencies) < 2:
        raise UsageError("a latency sweep needs at least two latencies")
    out = []
    for lat in latencies:
        sub = None
        if cfg.output_dir:
            sub = os.path.join(cfg.output_dir, f"latency_{lat * 1e3:.3f}ms")
        res = run_experiment(cfg.replace(latency=lat, output_dir=sub))
        out.append((lat, res.metrics))
    if cfg.output_dir:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        with open(os.path.join(cfg.output_dir, "sweep.csv"), "w", newline="\n", encoding="ascii") as fh:
            fh.write(sweep_csv(out))
    return out


def sweep_csv(results) -> str:
    return "latency,rmse,max_error\n" + "".join(
        f"{lat:.17g},{m.rmse:.17g},{m.max_error:.17g}\n" for lat, m in results
    )


# ---------------------------------------------------------------------------
# Thrust stand
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThrustStepResult:
    time_constant: float
    delay: float
    onset_delay: float
    times: np.ndarray
    thrust: np.ndarray


def _first_order_dead_time(t, tau, theta, y0, y1):
    s = np.clip(t - theta, 0.0, None)
    return y0 + (y1 - y0) * -np.expm1(-s / tau)


def thrust_step_experiment(
    model: QuadrotorModel | None = None,
    latency: float = 0.0,
    step: float = 12.0,
    base: float | None = None,
    t_step: float = 0.1,
    duration: float = 0.5,
    dt: float = THRUST_STAND_DT,
) -> ThrustStepResult:
    """Collective-thrust step on a pinned vehicle, identified as first order plus dead time.

    The measured force is converted to rotor speed (``sqrt(F / (4 c_f))``),
    where the motor is exactly first order, and ``speed(t)`` is fitted with a
    delayed exponential. ``delay`` is the fitted dead time from command send
    to response onset; ``onset_delay`` is the time at which the force first
    departs from its initial value by more than 1% of the step magnitude
    (linearly interpolated between samples). ``base`` defaults to the hover
    collective thrust so the force responds linearly at onset.
    """
    model = model or QuadrotorModel()
    if base is None:
        base = model.mass * model.g
    hold = Command.from_collective_thrust(0.0, base, np.zeros(3))
    speeds = np.full(4, math.sqrt(base / 4.0 / model.c_f))
    sim = Simulator(model, QuadState(), dt=dt, latency=latency, idle_command=hold, motor_speeds=speeds, pinned=True)
    n = int(round(duration / dt))
    k_step = int(round(t_step / dt))
    times = np.empty(n + 1)
    thrust = np.empty(n + 1)
    times[0], thrust[0] = sim.time, model.c_f * float(np.sum(speeds**2))
    for k in range(n):
        if k == k_step:
            sim.send(Command.from_collective_thrust(sim.time, step, np.zeros(3)))
        sim.step()
        times[k + 1] = sim.time
        thrust[k + 1] = sim.last_force[2]
    t_rel = times - times[k_step]
    speed = np.sqrt(np.clip(thrust, 0.0, None) / (4.0 * model.c_f))
    y0, y1 = speed[0], math.sqrt(step / (4.0 * model.c_f))
    (tau, theta), _ = curve_fit(
        lambda t, tau, theta: _first_order_dead_time(t, tau, theta, y0, y1),
        t_rel, speed, p0=(0.03, latency + 0.5 * dt), bounds=([1e-4, -dt], [1.0, duration]),
        xtol=1e-14, ftol=1e-14,
    )
    dev = np.abs(thrust - thrust[0])
    level = 0.01 * abs(step - base)
    departed = np.nonzero(dev > level)[0]
    onset = math.nan
    if departed.size:
        k = int(departed[0])
        onset = float(t_rel[k])
        if k > 0:
            onset = float(t_rel[k - 1] + (level - dev[k - 1]) / (dev[k] - dev[k - 1]) * (t_rel[k] - t_rel[k - 1]))
    return ThrustStepResult(float(tau), float(theta), onset, t_rel, thrust)
