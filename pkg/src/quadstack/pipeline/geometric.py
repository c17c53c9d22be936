"""Cascaded geometric (differential-flatness based) position controller."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..core import (
    E_Z,
    Command,
    QuadrotorModel,
    QuadState,
    Setpoint,
    quat_conjugate,
    quat_log,
    quat_multiply,
    rotation_to_quat,
    vec_norm,
)
from ..errors import InvalidArgumentError, SingularityError
from ..references.flatness import THRUST_EPS, attitude_from_thrust_and_yaw
from .config import GeometricGains


class GeometricOutput(NamedTuple):
    command: Command
    q_des: np.ndarray
    singular: bool


def tilt_prioritized_error(q, q_des) -> tuple[np.ndarray, np.ndarray]:
    """Split the attitude error ``q^-1 q_des`` into tilt and yaw rotation vectors.

    ``q_e = q_xy ⊗ q_z`` where ``q_xy`` has no z-component and ``q_z`` is a
    pure rotation about body z. Returns ``(log(q_xy), log(q_z))``.
    """
    qe = quat_multiply(quat_conjugate(q), q_des)
    if qe[0] < 0:
        qe = -qe
    w, x, y, z = qe
    n = np.hypot(w, z)
    if n < 1e-12:
        # 180-degree tilt error: yaw undefined, correct tilt only
        return quat_log(qe), np.zeros(3)
    q_z = np.array([w / n, 0.0, 0.0, z / n])
    q_xy = np.array([n, (w * x - y * z) / n, (w * y + x * z) / n, 0.0])
    return quat_log(q_xy), quat_log(q_z)


def control_geometric(
    state: QuadState,
    setpoint: Setpoint,
    gains: GeometricGains = GeometricGains(),
    model: QuadrotorModel | None = None,
    previous_q_des=None,
) -> GeometricOutput:
    """Collective-thrust/bodyrate command tracking ``setpoint``.

    The desired acceleration is the reference acceleration plus PD feedback;
    its direction (plus gravity) fixes the desired body z-axis, and the
    reference yaw fixes the heading. Bodyrates are the tilt/yaw-weighted
    rotation-vector error plus the reference bodyrate. If the desired thrust
    vanishes the previous desired attitude (or the current one) is kept and
    ``singular`` is set.
    """
    model = model or QuadrotorModel()
    if not state.valid:
        raise InvalidArgumentError("state must be finite")
    ref = setpoint.state
    kp = np.asarray(gains.kp)
    kv = np.asarray(gains.kv)
    a_des = ref.a + kp * (ref.p - state.p) + kv * (ref.v - state.v)
    thrust_vec = a_des + model.g * E_Z
    R = state.rotation
    singular = False
    if vec_norm(thrust_vec) <= THRUST_EPS:
        singular = True
        q_des = np.array(previous_q_des if previous_q_des is not None else state.q, dtype=float)
    else:
        z_des = thrust_vec / vec_norm(thrust_vec)
        try:
            q_des = rotation_to_quat(attitude_from_thrust_and_yaw(z_des, ref.yaw))
        except SingularityError:
            singular = True
            q_des = np.array(previous_q_des if previous_q_des is not None else state.q, dtype=float)
    e_xy, e_z = tilt_prioritized_error(state.q, q_des)
    w_cmd = gains.kq_xy * e_xy + gains.kq_z * e_z + ref.w
    w_cmd = np.clip(w_cmd, -model.w_max, model.w_max)
    collective = model.mass * float(thrust_vec @ R[:, 2])
    collective = float(np.clip(collective, 4.0 * model.f_min, 4.0 * model.f_max))
    return GeometricOutput(Command.from_collective_thrust(state.t, collective, w_cmd), q_des, singular)
