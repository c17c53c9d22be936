"""Per-step component models: low-level controller, motors, aerodynamics, rigid body."""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .. import dynamics
from ..core import Command, QuadState, QuadrotorModel, quat_to_rotation
from ..errors import InvalidArgumentError


class IntegratorKind(enum.Enum):
    RK4 = dynamics.RK4
    EXPLICIT_EULER = dynamics.EXPLICIT_EULER
    SYMPLECTIC_EULER = dynamics.SYMPLECTIC_EULER

    @classmethod
    def parse(cls, name) -> "IntegratorKind":
        if isinstance(name, cls):
            return name
        aliases = {
            "rk4": cls.RK4,
            "euler": cls.EXPLICIT_EULER,
            "explicit_euler": cls.EXPLICIT_EULER,
            "symplectic": cls.SYMPLECTIC_EULER,
            "symplectic_euler": cls.SYMPLECTIC_EULER,
        }
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise InvalidArgumentError(f"unknown integrator {name!r}; expected one of rk4, euler, symplectic") from None


DEFAULT_LOWLEVEL_GAINS = (20.0, 20.0, 10.0)


def _lowlevel_targets(is_thrust_mode, thrusts, collective, bodyrate_cmd, w, inertia, gains, model):
    if is_thrust_mode:
        f = np.clip(thrusts, model.f_min, model.f_max)
    else:
        torque = inertia * gains * (bodyrate_cmd - w)
        wrench = np.array([collective, torque[0], torque[1], torque[2]])
        f = np.clip(model.allocation_inverse @ wrench, model.f_min, model.f_max)
    return np.sqrt(f / model.c_f)


def lowlevel_sim(cmd: Command, state: QuadState, model: QuadrotorModel, gains=DEFAULT_LOWLEVEL_GAINS) -> np.ndarray:
    """Motor speed targets [rad/s] for a command.

    Thrust commands map straight to speeds. Collective-thrust/bodyrate commands
    go through a proportional bodyrate loop, ``torque = J K (w_cmd - w)``,
    and the allocation inverse. Speeds are bounded by the thrust limits.
    """
    if cmd.is_single_rotor:
        return _lowlevel_targets(True, np.asarray(cmd.thrusts), 0.0, None, None, None, None, model)
    return _lowlevel_targets(
        False, None, cmd.collective_thrust, np.asarray(cmd.bodyrate), state.w,
        model.inertia_vector, np.asarray(gains, dtype=float), model,
    )


def motor_step(speeds, targets, motor_tc: float, dt: float) -> np.ndarray:
    """Exact zero-order-hold discretization of a first-order motor."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    speeds = np.asarray(speeds, dtype=float)
    return speeds + (-np.expm1(-dt / motor_tc)) * (np.asarray(targets, dtype=float) - speeds)


class BodyWrench(NamedTuple):
    force: np.ndarray
    torque: np.ndarray
    thrusts: np.ndarray


class RotorAeroModel:
    """Maps rotor speeds and ego-motion to a body-frame wrench.

    Subclasses implement :meth:`wrench`. A blade-element model would plug in
    here; only the quadratic model ships with the package.
    """

    def wrench(self, speeds, q, v, model: QuadrotorModel) -> BodyWrench:
        raise NotImplementedError


class QuadraticAero(RotorAeroModel):
    """Thrust ``c_f * speed**2`` per rotor plus optional linear body drag."""

    def wrench(self, speeds, q, v, model):
        thrusts = model.c_f * np.square(speeds)
        out = model.allocation_matrix @ thrusts
        force = np.array([0.0, 0.0, out[0]])
        if any(model.drag_coeffs):
            force = force - np.asarray(model.drag_coeffs) * (quat_to_rotation(q).T @ v)
        return BodyWrench(force, out[1:], thrusts)


def aero_quadratic(speeds, state: QuadState, model: QuadrotorModel) -> BodyWrench:
    speeds = np.asarray(speeds, dtype=float)
    if np.any(speeds < 0):
        raise ValueError("rotor speeds must be non-negative")
    return QuadraticAero().wrench(speeds, state.q, state.v, model)


def rigid_body_step(
    quad: QuadState,
    wrench,
    model: QuadrotorModel,
    dt: float,
    kind: IntegratorKind = IntegratorKind.RK4,
) -> QuadState:
    """Advance the rigid body under a body-frame ``(force, torque)`` held over ``dt``.

    The returned state carries ``a`` (world) and ``tau`` (body) evaluated at the
    end of the step; all other fields are copied from ``quad`` apart from time.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    force, torque = np.asarray(wrench[0], dtype=float), np.asarray(wrench[1], dtype=float)
    x = dynamics.pack(quad.p, quad.q, quad.v, quad.w)
    xn, dxn = dynamics.integrate(
        x, force, torque, model.mass, model.inertia_vector, model.g, dt, IntegratorKind.parse(kind).value
    )
    return quad.replace(
        t=quad.t + dt, p=xn[0:3], q=xn[3:7], v=xn[7:10], w=xn[10:13], a=dxn[7:10], tau=dxn[10:13]
    )
