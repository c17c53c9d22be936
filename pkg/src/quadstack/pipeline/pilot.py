"""The pilot runs one pipeline cycle per call: estimator, guard, sampler, controllers, bridge."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..core import Command, QuadrotorModel, QuadState
from ..errors import BridgeError, InvalidArgumentError
from ..references.types import HoverReference, Reference
from ..simulator.imu import ImuSample
from .bridge import Bridge
from .config import (
    EstimatorKind,
    GuardConfig,
    InnerKind,
    OuterKind,
    PipelineConfig,
    SamplerKind,
)
from .estimators import EkfEstimator, EkfNoise, FeedthroughEstimator
from .geometric import control_geometric
from .guard import Guard, GuardStatus
from .indi import IndiController
from .mpc import MpcController
from .samplers import PositionSampler, TimeSampler


class PilotEvent(NamedTuple):
    t: float
    kind: str
    detail: str = ""


@dataclass
class PilotInputs:
    """External inputs for one cycle: state/pose estimates, IMU samples, feed-through commands."""

    states: list = field(default_factory=list)
    imu: list = field(default_factory=list)
    commands: list = field(default_factory=list)


class _Pipeline:
    """Instantiated modules of one :class:`PipelineConfig`."""

    def __init__(self, cfg: PipelineConfig, model: QuadrotorModel, reference: Reference | None):
        self.cfg = cfg
        period = cfg.period
        est = cfg.estimator
        timeout = est.timeout_periods * period
        if est.kind is EstimatorKind.FEEDTHROUGH:
            self.estimator = FeedthroughEstimator(timeout)
        else:
            self.estimator = EkfEstimator(
                noise=EkfNoise(est.gyro_noise, est.accel_noise, est.gyro_bias_walk, est.accel_bias_walk),
                position_noise=est.pose_position_noise, attitude_noise=est.pose_attitude_noise,
                gate_probability=est.gate_probability, timeout=timeout, g=model.g,
            )
        self.mpc = MpcController(model, cfg.mpc) if cfg.outer is OuterKind.MPC else None
        self.indi = IndiController(model, cfg.indi, cfg.control_rate) if cfg.inner is InnerKind.INDI else None
        self.sampler = None
        self.q_des_prev = None
        if reference is not None:
            self.set_reference(reference)

    def set_reference(self, ref: Reference):
        if self.cfg.sampler.kind is SamplerKind.POSITION:
            self.sampler = PositionSampler(ref, self.cfg.sampler.window)
        else:
            self.sampler = TimeSampler(ref)
        if self.mpc is not None:
            self.mpc.reset()


class Pilot:
    """Flight logic owning estimator, guard, sampler, controllers and bridge.

    Measurements may be queued from elsewhere with :meth:`push` (bounded;
    the oldest entries are dropped when full) and are drained at the start of
    each :meth:`step`. Commands supplied through :meth:`feed_command` are
    routed directly to the bridge while feed-through mode is enabled.
    """

    def __init__(
        self,
        config: PipelineConfig = PipelineConfig(),
        model: QuadrotorModel | None = None,
        bridge: Bridge | None = None,
        guard: GuardConfig | None = None,
        reference: Reference | None = None,
        backup_bridge: Bridge | None = None,
        queue_size: int = 1024,
    ):
        self.model = model or QuadrotorModel()
        self.bridge = bridge
        self.backup_bridge = backup_bridge
        self.guard = Guard(guard) if guard is not None and guard.enabled else None
        self.guard_config = guard
        self.events: list[PilotEvent] = []
        self.degraded = False
        self.backup_active = False
        self.singular = False
        self.feedthrough = False
        self._ext_cmd: Command | None = None
        self._queue: deque = deque(maxlen=queue_size)
        self.dropped = 0
        self.cycles = 0
        self.last_estimate: QuadState | None = None
        self.last_setpoints = []
        self.last_mpc = None
        self.last_outer_command: Command | None = None
        self._pipe = _Pipeline(config, self.model, reference)

    # -- configuration -----------------------------------------------------
    @property
    def config(self) -> PipelineConfig:
        return self._pipe.cfg

    @property
    def reference(self) -> Reference | None:
        return None if self._pipe.sampler is None else self._pipe.sampler.ref

    @property
    def estimator(self):
        return self._pipe.estimator

    @property
    def mpc(self) -> MpcController | None:
        return self._pipe.mpc

    @property
    def indi(self) -> IndiController | None:
        return self._pipe.indi

    def set_reference(self, ref: Reference):
        self._pipe.set_reference(ref)

    def switch_pipeline(self, cfg: PipelineConfig, reference: Reference | None = None, t: float = 0.0):
        """Replace the running pipeline; the current estimate seeds the new estimator."""
        ref = reference if reference is not None else self.reference
        old_est = self._pipe.estimator
        self._pipe = _Pipeline(cfg, self.model, ref)
        last = old_est.estimate() if hasattr(old_est, "estimate") else None
        if last is not None:
            if isinstance(self._pipe.estimator, EkfEstimator):
                self._pipe.estimator.initialize(last)
            else:
                self._pipe.estimator.update(last)
        self._log(t, "pipeline_switch", f"outer={cfg.outer.value} inner={cfg.inner.value}")

    def enable_feedthrough(self, enabled: bool = True):
        self.feedthrough = enabled
        self._ext_cmd = None

    def feed_command(self, cmd: Command):
        self.push(cmd)

    def push(self, item):
        """Queue a measurement (QuadState, ImuSample) or a feed-through Command."""
        if len(self._queue) == self._queue.maxlen:
            self.dropped += 1
        self._queue.append(item)

    def _log(self, t, kind, detail=""):
        self.events.append(PilotEvent(float(t), kind, detail))

    # -- cycle -------------------------------------------------------------
    def _ingest(self, item):
        if isinstance(item, Command):
            if self._ext_cmd is None or item.t >= self._ext_cmd.t:
                self._ext_cmd = item
            return
        est = self._pipe.estimator
        if isinstance(est, FeedthroughEstimator):
            if isinstance(item, QuadState):
                est.update(item)
            return
        if isinstance(item, (QuadState, ImuSample)):
            est.update(item)

    def _drain(self, inputs: PilotInputs | None):
        while self._queue:
            self._ingest(self._queue.popleft())
        if inputs is not None:
            for group in (inputs.imu, inputs.states, inputs.commands):
                for item in group:
                    self._ingest(item)

    def safety_hover_command(self, now: float) -> Command:
        return Command.from_collective_thrust(now, self.model.mass * self.model.g, np.zeros(3))

    def _send(self, cmd: Command, now: float):
        if self.bridge is None:
            return
        try:
            self.bridge.send(cmd, now)
        except BridgeError as exc:
            self._log(now, "bridge_error", str(exc))
            if self.backup_bridge is None:
                raise
            self.backup_bridge.send(self.safety_hover_command(now), now)

    def _activate_backup(self, now: float, est: QuadState):
        cfg = self.guard_config.backup
        entry = self.guard.entry_state or est
        p = entry.p if np.all(np.isfinite(entry.p)) else (est.p if np.all(np.isfinite(est.p)) else np.zeros(3))
        yaw = entry.yaw if np.all(np.isfinite(entry.q)) else 0.0
        self.feedthrough = False
        self.switch_pipeline(cfg, HoverReference(np.array(p), float(yaw), self.model), now)
        self.backup_active = True
        self._log(now, "backup_active", f"hover at {np.array2string(np.asarray(p), precision=3)}")

    def step(self, now: float, inputs: PilotInputs | None = None) -> Command:
        """Run exactly one control cycle and return the command handed to the bridge."""
        self.cycles += 1
        self._drain(inputs)
        pipe = self._pipe
        est_mod = pipe.estimator
        if est_mod.stale(now):
            if not self.degraded:
                self._log(now, "estimator_timeout", "no estimate within timeout; safety hover")
            self.degraded = True
            cmd = self.safety_hover_command(now)
            self._send(cmd, now)
            return cmd
        if self.degraded:
            self._log(now, "estimator_recovered")
        self.degraded = False
        est = est_mod.estimate(now)
        self.last_estimate = est

        if self.guard is not None:
            was_latched = self.guard.latched
            status = self.guard.check(est)
            if status is GuardStatus.VIOLATION and not was_latched:
                self._log(now, "guard_violation", f"p={np.array2string(np.asarray(est.p), precision=3)}")
                if not self.backup_active:
                    self._activate_backup(now, est)
                pipe = self._pipe

        if self.feedthrough:
            ext = self._ext_cmd
            timeout = pipe.cfg.bridge.feedthrough_timeout
            if ext is not None and now - ext.t <= timeout + 1e-9:
                cmd = ext.restamp(now)
                self._send(cmd, now)
                return cmd
            self.feedthrough = False
            self._log(now, "feedthrough_takeover", "command stream timed out; hovering")
            pipe.set_reference(HoverReference(np.array(est.p), est.yaw, self.model))

        if pipe.sampler is None:
            raise InvalidArgumentError("pilot has no active reference")
        cmd = self._control(pipe, est, now)
        self._send(cmd, now)
        return cmd

    def _control(self, pipe: _Pipeline, est: QuadState, now: float) -> Command:
        cfg = pipe.cfg
        if pipe.mpc is not None:
            N, h = cfg.mpc.N, cfg.mpc.dt
            t0 = now + cfg.mpc.delay_compensation
            setpoints = pipe.sampler.sample(t0, est.p, N + 1, h)
            res = pipe.mpc.solve(est, setpoints)
            self.last_mpc = res
            cmd = res.command
        else:
            setpoints = pipe.sampler.sample(now, est.p, 1, cfg.period)
            out = control_geometric(est, setpoints[0], cfg.geometric, self.model, pipe.q_des_prev)
            if out.singular and not self.singular:
                self._log(now, "singularity", "desired thrust vanished; holding attitude")
            self.singular = out.singular
            pipe.q_des_prev = out.q_des
            cmd = out.command
        self.last_setpoints = setpoints
        self.last_outer_command = cmd
        if pipe.indi is not None:
            cmd = pipe.indi.control(cmd, est).command
        return cmd.restamp(now)


def pilot_step(pilot: Pilot, now: float, external_inputs: PilotInputs | None = None) -> Command:
    return pilot.step(now, external_inputs)
