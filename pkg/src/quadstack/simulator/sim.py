"""Closed-loop quadrotor simulator stepped at a fixed rate (1 kHz by default)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import dynamics
from ..core import Command, CommandMode, QuadState, QuadrotorModel
from ..errors import InvalidArgumentError, SimulationFault
from .delay import DelayLine
from .imu import ImuSample, ImuSimulator
from .models import (
    BodyWrench,
    DEFAULT_LOWLEVEL_GAINS,
    IntegratorKind,
    QuadraticAero,
    RotorAeroModel,
    _lowlevel_targets,
    motor_step,
)

STATE_LOG_COLUMNS = (
    "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,ax,ay,az,jx,jy,jz,sx,sy,sz,f1,f2,f3,f4,m1,m2,m3,m4"
).split(",")


@dataclass(frozen=True, eq=False)
class SimState:
    quad: QuadState
    motor_speeds: np.ndarray = field(default_factory=lambda: np.zeros(4))
    sim_time: float = 0.0

    def __post_init__(self):
        speeds = np.array(self.motor_speeds, dtype=float).reshape(4)
        if np.any(speeds < 0):
            raise InvalidArgumentError("motor speeds must be non-negative")
        speeds.setflags(write=False)
        object.__setattr__(self, "motor_speeds", speeds)
        object.__setattr__(self, "sim_time", float(self.sim_time))


_NO_THRUSTS = np.zeros(4)
_DRAG_CACHE: dict = {}


def _drag_array(model):
    arr = _DRAG_CACHE.get(model.drag_coeffs)
    if arr is None:
        arr = _DRAG_CACHE[model.drag_coeffs] = np.array(model.drag_coeffs)
    return arr

_NO_RATES = np.zeros(3)


def _advance(x, speeds, cmd, model, inertia, dt, kind, gains, aero, dist_force, dist_torque):
    if type(aero) is QuadraticAero:
        thrust_mode = cmd.mode is CommandMode.SINGLE_ROTOR_THRUSTS
        xn, dxn, speeds, targets, thrusts, force, torque, finite = dynamics.quadratic_sim_step(
            x, speeds, thrust_mode,
            cmd._thrusts if thrust_mode else _NO_THRUSTS,
            0.0 if thrust_mode else cmd._collective_thrust,
            _NO_RATES if thrust_mode else cmd._bodyrate,
            gains, model.allocation_matrix, model.allocation_inverse, model.f_min, model.f_max,
            model.c_f, model.motor_tc, _drag_array(model), model.mass, inertia, model.g,
            dt, kind, dist_force, dist_torque,
        )
        return xn, dxn, speeds, targets, BodyWrench(force, torque, thrusts), finite
    if cmd.is_single_rotor:
        targets = _lowlevel_targets(True, cmd._thrusts, 0.0, None, None, None, None, model)
    else:
        targets = _lowlevel_targets(
            False, None, cmd._collective_thrust, cmd._bodyrate, x[10:13], inertia, gains, model
        )
    speeds = motor_step(speeds, targets, model.motor_tc, dt)
    bw = aero.wrench(speeds, x[3:7], x[7:10], model)
    force = bw.force + dist_force
    torque = bw.torque + dist_torque
    xn, dxn = dynamics.integrate(x, force, torque, model.mass, inertia, model.g, dt, kind)
    finite = bool(np.all(np.isfinite(xn)) and np.all(np.isfinite(speeds)))
    return xn, dxn, speeds, targets, BodyWrench(force, torque, bw.thrusts), finite


def sim_step(
    sim: SimState,
    released_cmd: Command,
    model: QuadrotorModel,
    dt: float = 0.001,
    integrator: IntegratorKind = IntegratorKind.RK4,
    lowlevel_gains=DEFAULT_LOWLEVEL_GAINS,
    aero: RotorAeroModel | None = None,
    disturbance_torque=(0.0, 0.0, 0.0),
) -> SimState:
    """One simulator update: low-level controller, motors, aerodynamics, rigid body."""
    if not 0.0 < dt <= 0.01:
        raise InvalidArgumentError("dt must be in (0, 0.01]")
    q = sim.quad
    x = dynamics.pack(q.p, q.q, q.v, q.w)
    xn, dxn, speeds, targets, bw, finite = _advance(
        x, np.asarray(sim.motor_speeds), released_cmd, model, model.inertia_vector, dt,
        IntegratorKind.parse(integrator).value, np.asarray(lowlevel_gains, dtype=float),
        aero or QuadraticAero(), np.zeros(3), np.asarray(disturbance_torque, dtype=float),
    )
    if not finite:
        raise SimulationFault(int(round(sim.sim_time / dt)), "non-finite state")
    quad = q.replace(
        t=q.t + dt, p=xn[0:3], q=xn[3:7], v=xn[7:10], w=xn[10:13], a=dxn[7:10], tau=dxn[10:13],
        fd=model.c_f * targets**2, f=bw.thrusts,
    )
    return SimState(quad, speeds, sim.sim_time + dt)


class Simulator:
    """Stateful simulator with a command delay line and zero-order hold.

    Call :meth:`send` to transmit a command and :meth:`step` to advance one
    ``dt``. Until the first command leaves the delay line the ``idle_command``
    is applied. With ``pinned=True`` the body is held fixed (thrust stand):
    rotors and aerodynamics still run and :attr:`last_force` reports the load.
    """

    def __init__(
        self,
        model: QuadrotorModel | None = None,
        initial_state: QuadState | None = None,
        *,
        dt: float = 0.001,
        integrator=IntegratorKind.RK4,
        latency: float = 0.0,
        idle_command: Command | None = None,
        motor_speeds=None,
        lowlevel_gains=DEFAULT_LOWLEVEL_GAINS,
        aero: RotorAeroModel | None = None,
        disturbance_torque=(0.0, 0.0, 0.0),
        disturbance_force=(0.0, 0.0, 0.0),
        imu: ImuSimulator | None = None,
        pinned: bool = False,
    ):
        if not 0.0 < dt <= 0.01:
            raise InvalidArgumentError("dt must be in (0, 0.01]")
        self.model = model or QuadrotorModel()
        self.dt = float(dt)
        self.integrator = IntegratorKind.parse(integrator)
        self.delay = DelayLine(latency)
        self.lowlevel_gains = np.asarray(lowlevel_gains, dtype=float)
        self.aero = aero or QuadraticAero()
        self.disturbance_torque = np.asarray(disturbance_torque, dtype=float)
        self.disturbance_force = np.asarray(disturbance_force, dtype=float)
        self.imu = imu
        self.pinned = pinned
        self._inertia = self.model.inertia_vector

        init = initial_state or QuadState.hover(model=self.model)
        self.t0 = init.t
        self.step_index = 0
        self._x = dynamics.pack(init.p, init.q, init.v, init.w)
        self._a = np.array(init.a)
        self._tau = np.array(init.tau)
        if motor_speeds is None:
            motor_speeds = np.sqrt(np.clip(init.f, 0.0, None) / self.model.c_f)
        self._speeds = np.array(motor_speeds, dtype=float)
        self._f = self.model.c_f * self._speeds**2
        self._fd = np.array(init.fd)
        self._bw = np.array(init.bw)
        self._ba = np.array(init.ba)
        if idle_command is None:
            idle_command = Command.from_thrusts(self.t0, np.full(4, self.model.f_min))
        self.applied_command = idle_command
        self.last_force = np.zeros(3)
        self.last_torque = np.zeros(3)
        self._cached: QuadState | None = None
        self._imu_samples: list[ImuSample] = []
        self._fast_args = None
        if type(self.aero) is QuadraticAero:
            m = self.model
            self._fast_args = (
                self.lowlevel_gains, m.allocation_matrix, m.allocation_inverse, m.f_min, m.f_max, m.c_f,
                m.motor_tc, _drag_array(m), m.mass, self._inertia, m.g, self.dt, self.integrator.value,
                self.disturbance_force, self.disturbance_torque,
            )
            self._fast_cmd = None

    @property
    def time(self) -> float:
        return self.t0 + self.step_index * self.dt

    @property
    def motor_speeds(self) -> np.ndarray:
        return self._speeds.copy()

    @property
    def state(self) -> QuadState:
        if self._cached is None:
            if getattr(self, "_targets", None) is not None:
                self._fd = self.model.c_f * self._targets**2
                self._targets = None
            x = self._x
            self._cached = QuadState(
                t=self.time, p=x[0:3], q=x[3:7], v=x[7:10], w=x[10:13], a=self._a, tau=self._tau,
                bw=self._bw, ba=self._ba, fd=self._fd, f=self._f,
            )
        return self._cached

    @property
    def sim_state(self) -> SimState:
        return SimState(self.state, self._speeds, self.time)

    def send(self, cmd: Command, send_time: float | None = None) -> float:
        return self.delay.push(cmd, self.time if send_time is None else send_time)

    def step(self) -> None:
        now = self.time
        released = self.delay.pop(now)
        if released is not None:
            self.applied_command = released
        if self._fast_args is not None:
            cmd = self.applied_command
            if self._fast_cmd is None or self._fast_cmd[0] is not cmd:
                single = cmd.mode is CommandMode.SINGLE_ROTOR_THRUSTS
                self._fast_cmd = (
                    cmd, single, cmd._thrusts if single else _NO_THRUSTS,
                    0.0 if single else cmd._collective_thrust, _NO_RATES if single else cmd._bodyrate,
                )
            _, single, thrusts_cmd, collective, rates = self._fast_cmd
            xn, dxn, speeds, targets, thrusts, force, torque, finite = dynamics.quadratic_sim_step(
                self._x, self._speeds, single, thrusts_cmd, collective, rates, *self._fast_args
            )
        else:
            xn, dxn, speeds, targets, bw, finite = _advance(
                self._x, self._speeds, self.applied_command, self.model, self._inertia, self.dt,
                self.integrator.value, self.lowlevel_gains, self.aero,
                self.disturbance_force, self.disturbance_torque,
            )
            thrusts, force, torque = bw.thrusts, bw.force, bw.torque
        if not finite:
            raise SimulationFault(self.step_index, "non-finite state")
        self.step_index += 1
        self._speeds = speeds
        self._f = thrusts
        self._targets = targets
        self.last_force = force
        self.last_torque = torque
        if not self.pinned:
            self._x = xn
            self._a = dxn[7:10]
            self._tau = dxn[10:13]
        self._cached = None
        if self.imu is not None:
            sample = self.imu.maybe_sample(self.time, self._x, self._a)
            if sample is not None:
                self._imu_samples.append(sample)

    def run(self, n_steps: int) -> None:
        for _ in range(n_steps):
            self.step()

    def drain_imu(self) -> list[ImuSample]:
        out, self._imu_samples = self._imu_samples, []
        return out

    def log_row(self) -> np.ndarray:
        """Row matching :data:`STATE_LOG_COLUMNS` (jerk and snap are not simulated)."""
        row = np.zeros(len(STATE_LOG_COLUMNS))
        row[0] = self.time
        row[1:14] = self._x
        row[14:17] = self._a
        row[23:27] = self._f
        row[27:31] = self._speeds
        return row
