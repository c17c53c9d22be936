"""Value types, frame conventions, quaternion helpers and control allocation.

Frame convention
----------------
Right-handed frames with origin at the center of gravity. The body z-axis
points along the thrust direction, the body x-axis points forward. The world
z-axis opposes gravity, so gravity in the world frame is ``(0, 0, -g)``.
Translational derivatives (v, a, j, s) are expressed in the world frame,
rotational derivatives (w, tau) in the body frame.

Quaternions are stored scalar-first ``(w, x, y, z)`` and rotate body vectors
into the world frame: ``v_world = R(q) @ v_body``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .errors import CommandModeError, InvalidArgumentError, ModelConfigError

GRAVITY = 9.81
E_Z = np.array([0.0, 0.0, 1.0])
IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

# Rotor order: front-left, front-right, rear-left, rear-right.
X_LAYOUT_DIRECTIONS = np.array(
    [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
) / np.sqrt(2.0)
X_LAYOUT_SPIN = (1.0, -1.0, -1.0, 1.0)


def gravity_vector(g: float = GRAVITY) -> np.ndarray:
    return np.array([0.0, 0.0, -g])


# ---------------------------------------------------------------------------
# Quaternion helpers (scalar-first, Hamilton product)
# ---------------------------------------------------------------------------

def vec_norm(v) -> float:
    """Euclidean norm of a 1-D vector (cheaper than ``np.linalg.norm`` for short vectors)."""
    v = np.asarray(v, dtype=float)
    return math.sqrt(float(v @ v))


def quat_multiply(q1, q2) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = vec_norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise InvalidArgumentError(f"cannot normalize quaternion {q}")
    return q / n


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix body->world for a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quat(R) -> np.ndarray:
    """Shepperd's method; returns a unit quaternion with non-negative scalar part."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return q / vec_norm(q)


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_rotation(q) @ np.asarray(v, dtype=float)


def quat_exp(rotvec) -> np.ndarray:
    """Unit quaternion of the rotation vector ``rotvec`` (angle * axis)."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = vec_norm(rotvec)
    half = 0.5 * angle
    if angle < 1e-8:
        # second-order series keeps the result accurate near zero
        return np.concatenate(([1.0 - half * half / 2.0], 0.5 * rotvec * (1.0 - half * half / 6.0)))
    return np.concatenate(([np.cos(half)], np.sin(half) / angle * rotvec))


def quat_log(q) -> np.ndarray:
    """Rotation vector of a unit quaternion, shortest-path (angle in [0, pi])."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    vn = vec_norm(q[1:])
    if vn < 1e-12:
        return 2.0 * q[1:]
    return 2.0 * np.arctan2(vn, q[0]) / vn * q[1:]


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(0.5 * yaw), 0.0, 0.0, np.sin(0.5 * yaw)])


def quat_yaw(q) -> float:
    """Heading of the body x-axis projected on the world xy-plane."""
    R = quat_to_rotation(q)
    return float(np.arctan2(R[1, 0], R[0, 0]))


def quat_slerp(q0, q1, frac: float) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if frac == 0.0:
        return q0.copy()
    if frac == 1.0:
        return q1.copy()
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 0.9995:
        out = q0 + frac * (q1 - q0)
        return out / vec_norm(out)
    theta = np.arccos(min(d, 1.0))
    s = np.sin(theta)
    out = (np.sin((1.0 - frac) * theta) * q0 + np.sin(frac * theta) * q1) / s
    return out / vec_norm(out)


def quaternion_integrate(q, w, dt: float) -> np.ndarray:
    """Advance ``q`` by a constant bodyrate ``w`` over ``dt``: q * exp(w dt / 2)."""
    if dt < 0.0:
        raise InvalidArgumentError("dt must be non-negative")
    out = quat_multiply(q, quat_exp(np.asarray(w, dtype=float) * dt))
    return out / vec_norm(out)


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (much cheaper than ``np.cross`` for single vectors)."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

def _vec(value, n, name):
    if (
        type(value) is np.ndarray and value.dtype == np.float64 and value.shape == (n,)
        and not value.flags.writeable and value.base is None
    ):
        # already an immutable owned array: safe to share
        return value
    arr = np.array(value, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1).copy()
    if arr.shape != (n,):
        raise InvalidArgumentError(f"{name} must have {n} elements, got shape {np.shape(value)}")
    arr.setflags(write=False)
    return arr


def _unit_quat(q):
    if (type(q) is np.ndarray and q.shape == (4,) and not q.flags.writeable and q.base is None
            and q.dtype == np.float64 and abs(float(q @ q) - 1.0) < 1e-15):
        return q
    q = np.array(q, dtype=float).reshape(-1).copy()
    if q.shape != (4,):
        raise InvalidArgumentError("q must have 4 elements")
    n = np.sqrt(float(q @ q))
    if np.isfinite(n) and n > 1e-12:
        q = q / n
    q.setflags(write=False)
    return q


_STATE_VECTORS = {
    "p": 3, "v": 3, "w": 3, "a": 3, "tau": 3, "j": 3, "s": 3,
    "bw": 3, "ba": 3, "fd": 4, "f": 4,
}


@dataclass(frozen=True, eq=False)
class QuadState:
    """Full time-stamped vehicle state.

    All arrays are read-only copies; use :meth:`replace` to derive new states.
    The quaternion is normalized on construction.
    """

    t: float = 0.0
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(3))
    j: np.ndarray = field(default_factory=lambda: np.zeros(3))
    s: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bw: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    fd: np.ndarray = field(default_factory=lambda: np.zeros(4))
    f: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        for name, n in _STATE_VECTORS.items():
            object.__setattr__(self, name, _vec(getattr(self, name), n, name))
        object.__setattr__(self, "q", _unit_quat(self.q))

    @property
    def valid(self) -> bool:
        cached = self.__dict__.get("_valid")
        if cached is None:
            values = [getattr(self, name) for name in _STATE_VECTORS]
            cached = bool(np.isfinite(self.t) and np.isfinite(np.concatenate([self.q, *values])).all())
            object.__setattr__(self, "_valid", cached)
        return cached

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rotation(self.q)

    @property
    def yaw(self) -> float:
        return quat_yaw(self.q)

    def replace(self, **changes) -> "QuadState":
        """Copy with some fields changed (only the changed fields are re-validated)."""
        out = object.__new__(QuadState)
        d = out.__dict__
        d.update(self.__dict__)
        for name, value in changes.items():
            if name == "t":
                d["t"] = float(value)
            elif name == "q":
                d["q"] = _unit_quat(value)
            elif name in _STATE_VECTORS:
                d[name] = _vec(value, _STATE_VECTORS[name], name)
            else:
                raise TypeError(f"QuadState has no field {name!r}")
        if "_valid" in d and (set(changes) - {"t"} or not np.isfinite(d["t"])):
            del d["_valid"]
        return out

    def allclose(self, other: "QuadState", atol: float = 1e-12) -> bool:
        if abs(self.t - other.t) > atol:
            return False
        for f in fields(self):
            if f.name == "t":
                continue
            if not np.allclose(getattr(self, f.name), getattr(other, f.name), rtol=0.0, atol=atol):
                return False
        return True

    @classmethod
    def hover(cls, p=(0.0, 0.0, 0.0), yaw: float = 0.0, t: float = 0.0, model=None) -> "QuadState":
        model = model or QuadrotorModel()
        f = np.full(4, model.hover_thrust)
        return cls(t=t, p=p, q=quat_from_yaw(yaw), fd=f, f=f)


class CommandMode(enum.Enum):
    SINGLE_ROTOR_THRUSTS = "SINGLE_ROTOR_THRUSTS"
    COLLECTIVE_THRUST_BODYRATE = "COLLECTIVE_THRUST_BODYRATE"


@dataclass(frozen=True, eq=False)
class Command:
    """Low-level command in exactly one of the two modes.

    Build with :meth:`from_thrusts` or :meth:`from_collective_thrust`.
    Accessing the payload of the inactive mode raises :class:`CommandModeError`.
    """

    t: float
    mode: CommandMode
    _thrusts: np.ndarray | None = None
    _collective_thrust: float | None = None
    _bodyrate: np.ndarray | None = None

    @classmethod
    def from_thrusts(cls, t: float, thrusts) -> "Command":
        return cls(float(t), CommandMode.SINGLE_ROTOR_THRUSTS, _thrusts=_vec(thrusts, 4, "thrusts"))

    @classmethod
    def from_collective_thrust(cls, t: float, collective_thrust: float, bodyrate) -> "Command":
        return cls(
            float(t),
            CommandMode.COLLECTIVE_THRUST_BODYRATE,
            _collective_thrust=float(collective_thrust),
            _bodyrate=_vec(bodyrate, 3, "bodyrate"),
        )

    @property
    def is_single_rotor(self) -> bool:
        return self.mode is CommandMode.SINGLE_ROTOR_THRUSTS

    @property
    def thrusts(self) -> np.ndarray:
        if self.mode is not CommandMode.SINGLE_ROTOR_THRUSTS:
            raise CommandModeError("thrusts are only valid in SINGLE_ROTOR_THRUSTS mode")
        return self._thrusts

    @property
    def collective_thrust(self) -> float:
        if self.mode is not CommandMode.COLLECTIVE_THRUST_BODYRATE:
            raise CommandModeError("collective_thrust is only valid in COLLECTIVE_THRUST_BODYRATE mode")
        return self._collective_thrust

    @property
    def bodyrate(self) -> np.ndarray:
        if self.mode is not CommandMode.COLLECTIVE_THRUST_BODYRATE:
            raise CommandModeError("bodyrate is only valid in COLLECTIVE_THRUST_BODYRATE mode")
        return self._bodyrate

    @property
    def valid(self) -> bool:
        if not np.isfinite(self.t):
            return False
        if self.is_single_rotor:
            return bool(np.all(np.isfinite(self._thrusts)))
        return bool(np.isfinite(self._collective_thrust) and np.all(np.isfinite(self._bodyrate)))

    def restamp(self, t: float) -> "Command":
        return replace(self, t=float(t))

    def same_as(self, other: "Command") -> bool:
        """Bitwise equality of time, mode and active payload."""
        if self.t != other.t or self.mode is not other.mode:
            return False
        if self.is_single_rotor:
            return bool(np.array_equal(self._thrusts, other._thrusts))
        return self._collective_thrust == other._collective_thrust and bool(
            np.array_equal(self._bodyrate, other._bodyrate)
        )


@dataclass(frozen=True, eq=False)
class Setpoint:
    state: QuadState
    input: Command

    def __post_init__(self):
        if self.state.t != self.input.t:
            raise InvalidArgumentError(
                f"setpoint state time {self.state.t} differs from input time {self.input.t}"
            )

    @property
    def t(self) -> float:
        return self.state.t


# ---------------------------------------------------------------------------
# Quadrotor parameters and allocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadrotorModel:
    """Physical parameters of an X-configuration quadrotor.

    Defaults: mass, per-rotor thrust limit and motor time constant describe the
    750 g agile platform; inertia, arm length and the rotor coefficients are
    plausible 6-inch-frame values and should be treated as configuration.
    ``c_f`` is chosen so the hover rotor speed is 1200 rad/s.
    """

    mass: float = 0.75
    inertia: tuple = (2.5e-3, 2.1e-3, 4.3e-3)
    arm_length: float = 0.15
    rotor_spin: tuple = X_LAYOUT_SPIN
    c_f: float = 0.75 * GRAVITY / 4.0 / 1200.0**2
    c_tau: float = 0.016
    f_min: float = 0.0
    f_max: float = 9.5
    motor_tc: float = 0.0391
    w_max: float = 12.0
    drag_coeffs: tuple = (0.0, 0.0, 0.0)
    g: float = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "inertia", tuple(float(x) for x in np.reshape(self.inertia, -1)))
        object.__setattr__(self, "rotor_spin", tuple(float(x) for x in self.rotor_spin))
        object.__setattr__(self, "drag_coeffs", tuple(float(x) for x in self.drag_coeffs))
        if len(self.inertia) != 3:
            raise ModelConfigError("inertia must be the 3 diagonal entries")
        if len(self.rotor_spin) != 4 or any(abs(s) != 1.0 for s in self.rotor_spin):
            raise ModelConfigError("rotor_spin must hold four entries of +1/-1")
        if len(self.drag_coeffs) != 3 or any(d < 0 for d in self.drag_coeffs):
            raise ModelConfigError("drag_coeffs must be three non-negative values")
        if not self.mass > 0:
            raise ModelConfigError("mass must be positive")
        if not all(i > 0 for i in self.inertia):
            raise ModelConfigError("inertia diagonal must be positive")
        if not (0.0 <= self.f_min < self.f_max):
            raise ModelConfigError("thrust limits must satisfy 0 <= f_min < f_max")
        if not self.motor_tc > 0:
            raise ModelConfigError("motor_tc must be positive")
        if not (self.arm_length > 0 and self.c_f > 0 and self.c_tau > 0 and self.w_max > 0):
            raise ModelConfigError("arm_length, c_f, c_tau and w_max must be positive")
        A = self._build_allocation()
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond >= 1e6:
            raise ModelConfigError(f"allocation matrix is ill-conditioned (cond={cond:.3g})")
        A.setflags(write=False)
        A_inv = np.linalg.inv(A)
        A_inv.setflags(write=False)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_A_inv", A_inv)

    def _build_allocation(self) -> np.ndarray:
        pos = self.rotor_positions
        return np.vstack(
            [np.ones(4), pos[:, 1], -pos[:, 0], self.c_tau * np.asarray(self.rotor_spin)]
        )

    @property
    def rotor_positions(self) -> np.ndarray:
        """Rotor hub positions (x, y) in the body frame, shape (4, 2)."""
        return self.arm_length * X_LAYOUT_DIRECTIONS

    @property
    def allocation_matrix(self) -> np.ndarray:
        """Maps rotor thrusts to (collective thrust, torque_x, torque_y, torque_z)."""
        return self._A

    @property
    def allocation_inverse(self) -> np.ndarray:
        return self._A_inv

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.diag(self.inertia)

    @property
    def inertia_vector(self) -> np.ndarray:
        return np.array(self.inertia)

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust at hover."""
        return self.mass * self.g / 4.0

    @property
    def hover_speed(self) -> float:
        return float(np.sqrt(self.hover_thrust / self.c_f))

    @property
    def speed_limits(self) -> tuple[float, float]:
        return float(np.sqrt(self.f_min / self.c_f)), float(np.sqrt(self.f_max / self.c_f))

    def replace(self, **changes) -> "QuadrotorModel":
        return replace(self, **changes)


class Wrench(NamedTuple):
    collective_thrust: float
    torque: np.ndarray


class Allocation(NamedTuple):
    thrusts: np.ndarray
    clamped: bool


def allocate(thrusts, model: QuadrotorModel) -> Wrench:
    """Collective thrust and body torque produced by the rotor thrusts."""
    thrusts = np.asarray(thrusts, dtype=float).reshape(-1)
    if thrusts.shape != (4,) or not np.all(np.isfinite(thrusts)):
        raise InvalidArgumentError(f"thrusts must be 4 finite values, got {thrusts}")
    out = model.allocation_matrix @ thrusts
    return Wrench(float(out[0]), out[1:])


def allocate_inverse(collective_thrust: float, body_torque, model: QuadrotorModel) -> Allocation:
    """Rotor thrusts realizing the wrench, clipped per rotor to [f_min, f_max]."""
    body_torque = np.asarray(body_torque, dtype=float).reshape(-1)
    if body_torque.shape != (3,):
        raise InvalidArgumentError("body_torque must have 3 elements")
    wrench = np.concatenate(([float(collective_thrust)], body_torque))
    if not np.all(np.isfinite(wrench)):
        raise InvalidArgumentError(f"non-finite wrench {wrench}")
    raw = model.allocation_inverse @ wrench
    clipped = np.clip(raw, model.f_min, model.f_max)
    return Allocation(clipped, bool(np.any(clipped != raw)))
