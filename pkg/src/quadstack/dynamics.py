"""Compiled rigid-body kernels shared by the simulator and the MPC.

State vectors are flat float64 arrays of length 13 laid out as
``[p(3), q(4), v(3), w(3)]`` with the quaternion scalar-first, body->world.
Forces and torques are in the body frame.
"""

import numpy as np
from numba import njit

NX = 13
NU = 4
P, Q, V, W = slice(0, 3), slice(3, 7), slice(7, 10), slice(10, 13)

RK4 = 0
EXPLICIT_EULER = 1
SYMPLECTIC_EULER = 2


@njit(cache=True)
def rotation(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)
    return R


@njit(cache=True)
def derivative(x, force, torque, mass, inertia, g):
    """Time derivative of the 13-state under a body-frame wrench."""
    dx = np.empty(NX)
    q = x[3:7]
    w = x[10:13]
    R = rotation(q)
    for i in range(3):
        dx[i] = x[7 + i]
        dx[7 + i] = (R[i, 0] * force[0] + R[i, 1] * force[1] + R[i, 2] * force[2]) / mass
    dx[9] -= g
    # q_dot = 0.5 * q (x) (0, w)
    dx[3] = 0.5 * (-q[1] * w[0] - q[2] * w[1] - q[3] * w[2])
    dx[4] = 0.5 * (q[0] * w[0] + q[2] * w[2] - q[3] * w[1])
    dx[5] = 0.5 * (q[0] * w[1] - q[1] * w[2] + q[3] * w[0])
    dx[6] = 0.5 * (q[0] * w[2] + q[1] * w[1] - q[2] * w[0])
    Jw0 = inertia[0] * w[0]
    Jw1 = inertia[1] * w[1]
    Jw2 = inertia[2] * w[2]
    dx[10] = (torque[0] - (w[1] * Jw2 - w[2] * Jw1)) / inertia[0]
    dx[11] = (torque[1] - (w[2] * Jw0 - w[0] * Jw2)) / inertia[1]
    dx[12] = (torque[2] - (w[0] * Jw1 - w[1] * Jw0)) / inertia[2]
    return dx


@njit(cache=True)
def normalize_quaternion(x):
    n = np.sqrt(x[3] ** 2 + x[4] ** 2 + x[5] ** 2 + x[6] ** 2)
    for i in range(3, 7):
        x[i] /= n


@njit(cache=True)
def _exp_update(q, w, dt):
    """q (x) exp(w dt / 2), renormalized."""
    wx, wy, wz = w[0] * dt, w[1] * dt, w[2] * dt
    angle = np.sqrt(wx * wx + wy * wy + wz * wz)
    half = 0.5 * angle
    if angle < 1e-8:
        c = 1.0 - half * half / 2.0
        k = 0.5 * (1.0 - half * half / 6.0)
    else:
        c = np.cos(half)
        k = np.sin(half) / angle
    dq = np.array([c, k * wx, k * wy, k * wz])
    out = np.empty(4)
    out[0] = q[0] * dq[0] - q[1] * dq[1] - q[2] * dq[2] - q[3] * dq[3]
    out[1] = q[0] * dq[1] + q[1] * dq[0] + q[2] * dq[3] - q[3] * dq[2]
    out[2] = q[0] * dq[2] - q[1] * dq[3] + q[2] * dq[0] + q[3] * dq[1]
    out[3] = q[0] * dq[3] + q[1] * dq[2] - q[2] * dq[1] + q[3] * dq[0]
    n = np.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    return out / n


@njit(cache=True)
def integrate(x, force, torque, mass, inertia, g, dt, kind):
    """One integration step under a wrench held constant over ``dt``.

    Returns the new state and its derivative evaluated at the new state.
    """
    if kind == RK4:
        k1 = derivative(x, force, torque, mass, inertia, g)
        k2 = derivative(x + 0.5 * dt * k1, force, torque, mass, inertia, g)
        k3 = derivative(x + 0.5 * dt * k2, force, torque, mass, inertia, g)
        k4 = derivative(x + dt * k3, force, torque, mass, inertia, g)
        xn = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        normalize_quaternion(xn)
    elif kind == EXPLICIT_EULER:
        xn = x + dt * derivative(x, force, torque, mass, inertia, g)
        normalize_quaternion(xn)
    else:
        # velocities first, then positions/attitude from the updated velocities
        d = derivative(x, force, torque, mass, inertia, g)
        xn = x.copy()
        for i in range(7, 13):
            xn[i] = x[i] + dt * d[i]
        for i in range(3):
            xn[i] = x[i] + dt * xn[7 + i]
        xn[3:7] = _exp_update(x[3:7], xn[10:13], dt)
    return xn, derivative(xn, force, torque, mass, inertia, g)


# ---------------------------------------------------------------------------
# Thrust-input model used by the MPC (inputs are the four rotor thrusts)
# ---------------------------------------------------------------------------

@njit(cache=True)
def thrust_derivative(x, u, mass, inertia, g, alloc):
    force = np.zeros(3)
    force[2] = u[0] + u[1] + u[2] + u[3]
    torque = np.zeros(3)
    for r in range(3):
        for c in range(4):
            torque[r] += alloc[1 + r, c] * u[c]
    return derivative(x, force, torque, mass, inertia, g)


@njit(cache=True)
def thrust_jacobians(x, u, mass, inertia, g, alloc):
    """Continuous-time Jacobians (df/dx, df/du) of :func:`thrust_derivative`."""
    A = np.zeros((NX, NX))
    B = np.zeros((NX, NU))
    qw, qx, qy, qz = x[3], x[4], x[5], x[6]
    w = x[10:13]
    ct = u[0] + u[1] + u[2] + u[3]
    for i in range(3):
        A[i, 7 + i] = 1.0
    # quaternion kinematics: d/dq of 0.5 * q (x) (0, w)
    wx, wy, wz = w[0], w[1], w[2]
    Om = np.array(
        [[0.0, -wx, -wy, -wz], [wx, 0.0, wz, -wy], [wy, -wz, 0.0, wx], [wz, wy, -wx, 0.0]]
    )
    for r in range(4):
        for c in range(4):
            A[3 + r, 3 + c] = 0.5 * Om[r, c]
    # d/dw of 0.5 * q (x) (0, w)
    Qm = np.array([[-qx, -qy, -qz], [qw, -qz, qy], [qz, qw, -qx], [-qy, qx, qw]])
    for r in range(4):
        for c in range(3):
            A[3 + r, 10 + c] = 0.5 * Qm[r, c]
    # velocity: R(q) e_z * ct / m
    s = ct / mass
    dz = np.array(
        [
            [2 * qy, 2 * qz, 2 * qw, 2 * qx],
            [-2 * qx, -2 * qw, 2 * qz, 2 * qy],
            [0.0, -4 * qx, -4 * qy, 0.0],
        ]
    )
    for r in range(3):
        for c in range(4):
            A[7 + r, 3 + c] = s * dz[r, c]
    zb = np.array([2 * (qx * qz + qw * qy), 2 * (qy * qz - qw * qx), 1 - 2 * (qx * qx + qy * qy)])
    for r in range(3):
        for c in range(4):
            B[7 + r, c] = zb[r] / mass
    # angular: J^-1 (tau - w x J w)
    J = inertia
    Jw = np.array([J[0] * wx, J[1] * wy, J[2] * wz])
    # d(w x Jw)/dw = [w]x J - [Jw]x
    Sw = np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])
    SJw = np.array([[0.0, -Jw[2], Jw[1]], [Jw[2], 0.0, -Jw[0]], [-Jw[1], Jw[0], 0.0]])
    for r in range(3):
        for c in range(3):
            A[10 + r, 10 + c] = -(Sw[r, c] * J[c] - SJw[r, c]) / J[r]
        for c in range(4):
            B[10 + r, c] = alloc[1 + r, c] / J[r]
    return A, B


@njit(cache=True)
def thrust_rk4_sensitivity(x, u, h, mass, inertia, g, alloc):
    """RK4 step of the thrust-input model with exact discrete Jacobians."""
    I = np.eye(NX)
    k1 = thrust_derivative(x, u, mass, inertia, g, alloc)
    A1, B1 = thrust_jacobians(x, u, mass, inertia, g, alloc)
    x2 = x + 0.5 * h * k1
    k2 = thrust_derivative(x2, u, mass, inertia, g, alloc)
    A2, B2 = thrust_jacobians(x2, u, mass, inertia, g, alloc)
    K2x = A2 @ (I + 0.5 * h * A1)
    K2u = A2 @ (0.5 * h * B1) + B2
    x3 = x + 0.5 * h * k2
    k3 = thrust_derivative(x3, u, mass, inertia, g, alloc)
    A3, B3 = thrust_jacobians(x3, u, mass, inertia, g, alloc)
    K3x = A3 @ (I + 0.5 * h * K2x)
    K3u = A3 @ (0.5 * h * K2u) + B3
    x4 = x + h * k3
    k4 = thrust_derivative(x4, u, mass, inertia, g, alloc)
    A4, B4 = thrust_jacobians(x4, u, mass, inertia, g, alloc)
    K4x = A4 @ (I + h * K3x)
    K4u = A4 @ (h * K3u) + B4
    xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Ad = I + h / 6.0 * (A1 + 2.0 * K2x + 2.0 * K3x + K4x)
    Bd = h / 6.0 * (B1 + 2.0 * K2u + 2.0 * K3u + K4u)
    return xn, Ad, Bd


@njit(cache=True)
def thrust_rk4(x, u, h, mass, inertia, g, alloc):
    k1 = thrust_derivative(x, u, mass, inertia, g, alloc)
    k2 = thrust_derivative(x + 0.5 * h * k1, u, mass, inertia, g, alloc)
    k3 = thrust_derivative(x + 0.5 * h * k2, u, mass, inertia, g, alloc)
    k4 = thrust_derivative(x + h * k3, u, mass, inertia, g, alloc)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def pack(p, q, v, w) -> np.ndarray:
    return np.concatenate([np.asarray(p, float), np.asarray(q, float), np.asarray(v, float), np.asarray(w, float)])


@njit(cache=True)
def quadratic_sim_step(
    x, speeds, is_thrust_mode, thrusts_cmd, collective, bodyrate_cmd, gains,
    alloc, alloc_inv, f_min, f_max, c_f, motor_tc, drag, mass, inertia, g,
    dt, kind, dist_force, dist_torque,
):
    """Fused low-level controller, motor, quadratic aero and rigid-body step."""
    f_des = np.empty(4)
    if is_thrust_mode:
        for i in range(4):
            f_des[i] = thrusts_cmd[i]
    else:
        wrench = np.empty(4)
        wrench[0] = collective
        for i in range(3):
            wrench[1 + i] = inertia[i] * gains[i] * (bodyrate_cmd[i] - x[10 + i])
        f_des = alloc_inv @ wrench
    targets = np.empty(4)
    for i in range(4):
        targets[i] = np.sqrt(min(max(f_des[i], f_min), f_max) / c_f)
    k = -np.expm1(-dt / motor_tc)
    speeds_n = speeds + k * (targets - speeds)
    thrusts = c_f * speeds_n * speeds_n
    out = alloc @ thrusts
    force = np.zeros(3)
    force[2] = out[0]
    if drag[0] != 0.0 or drag[1] != 0.0 or drag[2] != 0.0:
        R = rotation(x[3:7])
        vb = R.T @ x[7:10]
        for i in range(3):
            force[i] -= drag[i] * vb[i]
    torque = out[1:4].copy()
    force += dist_force
    torque += dist_torque
    xn, dxn = integrate(x, force, torque, mass, inertia, g, dt, kind)
    finite = np.isfinite(xn).all() and np.isfinite(speeds_n).all()
    return xn, dxn, speeds_n, targets, thrusts, force, torque, finite
