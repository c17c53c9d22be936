"""Differential-flatness map from position/yaw derivatives to full state and inputs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import (
    E_Z,
    Command,
    QuadrotorModel,
    QuadState,
    Setpoint,
    allocate_inverse,
    cross3,
    vec_norm,
    rotation_to_quat,
)
from ..errors import InvalidArgumentError, SingularityError

_DEFAULT_MODEL = QuadrotorModel()
THRUST_EPS = 1e-6


def _vec3(x):
    return np.asarray(x, dtype=float).reshape(3)


@dataclass(frozen=True, eq=False)
class FlatOutput:
    """Position with derivatives up to snap, plus yaw and its first two derivatives."""

    t: float = 0.0
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    j: np.ndarray = field(default_factory=lambda: np.zeros(3))
    s: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    yaw_rate: float = 0.0
    yaw_acc: float = 0.0

    def __post_init__(self):
        for name in ("p", "v", "a", "j", "s"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))


def _unit_with_derivs(n, dn, ddn):
    """u = n/|n| and its first two time derivatives given those of n."""
    r = vec_norm(n)
    u = n / r
    du = (dn - u * np.dot(u, dn)) / r
    ddu = (ddn - du * np.dot(u, dn) - u * (np.dot(du, dn) + np.dot(u, ddn))) / r - du * np.dot(u, dn) / r
    return u, du, ddu


def attitude_from_thrust_and_yaw(z_body, yaw: float) -> np.ndarray:
    """Rotation whose z-axis is ``z_body`` and whose x-axis heads along ``yaw``.

    The body x-axis is taken orthogonal to the horizontal direction
    ``(-sin yaw, cos yaw, 0)``; this is singular only at 90 degrees of roll.
    """
    y_c = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
    x_b = cross3(y_c, z_body)
    n = vec_norm(x_b)
    if n < 1e-9:
        raise SingularityError(float("nan"), "thrust direction parallel to the heading normal")
    x_b /= n
    y_b = cross3(z_body, x_b)
    return np.column_stack([x_b, y_b, z_body])


def flatness_state(flat: FlatOutput, model: QuadrotorModel | None = None) -> QuadState:
    """Full state (attitude, bodyrate, angular acceleration, rotor thrusts) of a flat output.

    Raises
    ------
    SingularityError
        If the required thrust vanishes (free fall) or points along the heading.
    """
    model = model or _DEFAULT_MODEL
    g = model.g
    thrust = flat.a + g * E_Z
    if not np.all(np.isfinite(thrust)):
        raise InvalidArgumentError(f"non-finite flat output at t={flat.t}")
    if vec_norm(thrust) <= THRUST_EPS:
        raise SingularityError(flat.t)
    c = float(vec_norm(thrust))
    z, dz, ddz = _unit_with_derivs(thrust, flat.j, flat.s)

    psi, dpsi, ddpsi = flat.yaw, flat.yaw_rate, flat.yaw_acc
    cp, sp = np.cos(psi), np.sin(psi)
    y_c = np.array([-sp, cp, 0.0])
    dy_c = dpsi * np.array([-cp, -sp, 0.0])
    ddy_c = ddpsi * np.array([-cp, -sp, 0.0]) - dpsi**2 * y_c

    m = cross3(y_c, z)
    if vec_norm(m) < 1e-9:
        raise SingularityError(flat.t, f"thrust direction parallel to the heading normal at t={flat.t:.6f} s")
    dm = cross3(dy_c, z) + cross3(y_c, dz)
    ddm = cross3(ddy_c, z) + 2.0 * cross3(dy_c, dz) + cross3(y_c, ddz)
    x, dx, ddx = _unit_with_derivs(m, dm, ddm)
    y = cross3(z, x)
    dy = cross3(dz, x) + cross3(z, dx)

    # body rates from the derivatives of the body axes: dR = R [w]x
    w = np.array([-np.dot(y, dz), np.dot(x, dz), np.dot(y, dx)])
    alpha = np.array(
        [
            -np.dot(dy, dz) - np.dot(y, ddz),
            np.dot(dx, dz) + np.dot(x, ddz),
            np.dot(dy, dx) + np.dot(y, ddx),
        ]
    )
    R = np.column_stack([x, y, z])
    J = model.inertia_vector
    torque = J * alpha + cross3(w, J * w)
    thrusts, _ = allocate_inverse(model.mass * c, torque, model)
    return QuadState(
        t=flat.t, p=flat.p, q=rotation_to_quat(R), v=flat.v, w=w, a=flat.a, tau=alpha,
        j=flat.j, s=flat.s, fd=thrusts, f=thrusts,
    )


def flatness_setpoint(flat: FlatOutput, model: QuadrotorModel | None = None) -> Setpoint:
    state = flatness_state(flat, model)
    return Setpoint(state, Command.from_thrusts(state.t, state.fd))


def required_wrench(state: QuadState, model: QuadrotorModel) -> tuple[float, np.ndarray]:
    """Collective thrust and body torque implied by a reference state's a, w and tau."""
    c = vec_norm(state.a + model.g * E_Z)
    J = model.inertia_vector
    return model.mass * c, J * state.tau + cross3(state.w, J * state.w)


def thrust_limit_violation(state: QuadState, model: QuadrotorModel) -> float:
    """How far the unclamped rotor thrusts of a reference state exceed the limits [N].

    Zero means dynamically feasible.
    """
    ct, torque = required_wrench(state, model)
    raw = model.allocation_inverse @ np.concatenate(([ct], torque))
    return float(max(0.0, np.max(raw - model.f_max), np.max(model.f_min - raw)))
