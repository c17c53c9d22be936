"""Reference representations consumed by the samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import Command, QuadrotorModel, QuadState, Setpoint, quat_slerp
from ..errors import InvalidArgumentError
from .flatness import FlatOutput, flatness_setpoint

# Column layout shared by the in-memory trajectory table and the CSV format.
TRAJECTORY_COLUMNS = (
    "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,ax,ay,az,jx,jy,jz,sx,sy,sz,f1,f2,f3,f4"
).split(",")
_T, _P, _Q, _V, _W, _A, _J, _S, _F = (
    0, slice(1, 4), slice(4, 8), slice(8, 11), slice(11, 14), slice(14, 17),
    slice(17, 20), slice(20, 23), slice(23, 27),
)


class Reference:
    """Anything that yields a setpoint for an absolute time."""

    t_start: float = 0.0

    @property
    def t_end(self) -> float:
        return math.inf

    def setpoint_at(self, t: float) -> Setpoint:
        raise NotImplementedError

    def position_at(self, t: float) -> np.ndarray:
        return np.array(self.setpoint_at(t).state.p)


def _finite(*values):
    return all(np.all(np.isfinite(np.asarray(v, dtype=float))) for v in values)


@dataclass(frozen=True, eq=False)
class HoverReference(Reference):
    p_ref: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_ref: float = 0.0
    model: QuadrotorModel = field(default_factory=QuadrotorModel)

    def __post_init__(self):
        object.__setattr__(self, "p_ref", np.asarray(self.p_ref, dtype=float).reshape(3))
        if not _finite(self.p_ref, self.yaw_ref):
            raise InvalidArgumentError("hover reference must be finite")

    def setpoint_at(self, t):
        base = self.__dict__.get("_base")
        if base is None:
            base = flatness_setpoint(FlatOutput(t=0.0, p=self.p_ref, yaw=self.yaw_ref), self.model)
            object.__setattr__(self, "_base", base)
        t = float(t)
        return Setpoint(base.state.replace(t=t), base.input.restamp(t))

    def position_at(self, t):
        return self.p_ref.copy()


@dataclass(frozen=True, eq=False)
class VelocityReference(Reference):
    """Constant velocity and yaw rate over ``duration``, then hold the reached pose.

    Realized as a moving hover target ``p0 + v_ref * (t - t_start)``.
    """

    v_ref: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate_ref: float = 0.0
    t_start: float = 0.0
    duration: float = 1.0
    p0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw0: float = 0.0
    model: QuadrotorModel = field(default_factory=QuadrotorModel)

    def __post_init__(self):
        object.__setattr__(self, "v_ref", np.asarray(self.v_ref, dtype=float).reshape(3))
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float).reshape(3))
        if not self.duration > 0:
            raise InvalidArgumentError("velocity reference duration must be positive")
        if not _finite(self.v_ref, self.yaw_rate_ref, self.t_start, self.duration, self.p0, self.yaw0):
            raise InvalidArgumentError("velocity reference must be finite")

    @property
    def t_end(self):
        return self.t_start + self.duration

    def setpoint_at(self, t):
        tau = min(max(t - self.t_start, 0.0), self.duration)
        active = self.t_start <= t < self.t_end
        flat = FlatOutput(
            t=t,
            p=self.p0 + self.v_ref * tau,
            v=self.v_ref if active else np.zeros(3),
            yaw=self.yaw0 + self.yaw_rate_ref * tau,
            yaw_rate=self.yaw_rate_ref if active else 0.0,
        )
        return flatness_setpoint(flat, self.model)


def polynomial_derivatives(coeffs, tau: float, order: int = 4) -> np.ndarray:
    """Value and first ``order`` derivatives of ``sum_k coeffs[k] tau**k`` (Horner)."""
    c = np.asarray(coeffs, dtype=float)
    out = np.zeros(order + 1)
    for d in range(order + 1):
        acc = 0.0
        for k in range(len(c) - 1, -1, -1):
            acc = acc * tau + c[k]
        out[d] = acc
        if len(c) <= 1:
            break
        c = c[1:] * np.arange(1, len(c))
    return out


@dataclass(frozen=True, eq=False)
class PolynomialReference(Reference):
    """Per-axis position polynomials (degree <= 11) and a yaw polynomial (degree <= 5).

    Coefficients are in ascending powers of ``tau = t - t_start``.
    """

    coeffs_x: Sequence[float]
    coeffs_y: Sequence[float]
    coeffs_z: Sequence[float]
    coeffs_yaw: Sequence[float] = (0.0,)
    t_start: float = 0.0
    duration: float = 1.0
    model: QuadrotorModel = field(default_factory=QuadrotorModel)

    def __post_init__(self):
        for name, max_deg in (("coeffs_x", 11), ("coeffs_y", 11), ("coeffs_z", 11), ("coeffs_yaw", 5)):
            c = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if c.size == 0:
                raise InvalidArgumentError(f"{name} must not be empty")
            if c.size - 1 > max_deg:
                raise InvalidArgumentError(f"{name} has degree {c.size - 1} > {max_deg}")
            if not np.all(np.isfinite(c)):
                raise InvalidArgumentError(f"{name} must be finite")
            object.__setattr__(self, name, c)
        if not self.duration > 0:
            raise InvalidArgumentError("polynomial reference duration must be positive")

    @property
    def t_end(self):
        return self.t_start + self.duration

    def flat_output(self, t: float) -> FlatOutput:
        tau = t - self.t_start
        clamped = tau < 0.0 or tau > self.duration
        tau = min(max(tau, 0.0), self.duration)
        axes = np.array([polynomial_derivatives(c, tau) for c in (self.coeffs_x, self.coeffs_y, self.coeffs_z)])
        yaw = polynomial_derivatives(self.coeffs_yaw, tau, order=2)
        if clamped and np.all(np.abs(axes[:, 1]) < 1e-9) and abs(yaw[1]) < 1e-9:
            axes[:, 1:] = 0.0
            yaw[1:] = 0.0
        return FlatOutput(
            t=t, p=axes[:, 0], v=axes[:, 1], a=axes[:, 2], j=axes[:, 3], s=axes[:, 4],
            yaw=yaw[0], yaw_rate=yaw[1], yaw_acc=yaw[2],
        )

    def setpoint_at(self, t):
        return flatness_setpoint(self.flat_output(t), self.model)


def sample_polynomial(ref: PolynomialReference, t: float) -> Setpoint:
    return ref.setpoint_at(t)


def _setpoint_row(sp: Setpoint) -> np.ndarray:
    s = sp.state
    return np.concatenate(([s.t], s.p, s.q, s.v, s.w, s.a, s.j, s.s, sp.input.thrusts))


class SampledTrajectory(Reference):
    """Ordered setpoints with strictly increasing timestamps (at least two).

    Setpoint inputs are single-rotor thrust commands. Interpolation between
    samples is linear, with slerp for the attitude.
    """

    def __init__(self, setpoints: Sequence[Setpoint]):
        setpoints = tuple(setpoints)
        if len(setpoints) < 2:
            raise InvalidArgumentError("a sampled trajectory needs at least two setpoints")
        data = np.array([_setpoint_row(sp) for sp in setpoints])
        tau = np.array([sp.state.tau for sp in setpoints])
        self._init(data, tau, setpoints)

    @classmethod
    def from_table(cls, data, tau=None) -> "SampledTrajectory":
        """Build from an (n, 27) array in :data:`TRAJECTORY_COLUMNS` order."""
        data = np.array(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(TRAJECTORY_COLUMNS):
            raise InvalidArgumentError(f"trajectory table must have shape (n, {len(TRAJECTORY_COLUMNS)})")
        if data.shape[0] < 2:
            raise InvalidArgumentError("a sampled trajectory needs at least two setpoints")
        obj = cls.__new__(cls)
        obj._init(data, np.zeros((data.shape[0], 3)) if tau is None else np.asarray(tau, float), None)
        return obj

    def _init(self, data, tau, setpoints):
        t = data[:, _T]
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("trajectory contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("trajectory timestamps must be strictly increasing")
        data.setflags(write=False)
        self._data = data
        self._tau = tau
        self._setpoints = setpoints

    def __len__(self):
        return self._data.shape[0]

    def __getitem__(self, k) -> Setpoint:
        return self.setpoints[k]

    @property
    def setpoints(self) -> tuple[Setpoint, ...]:
        if self._setpoints is None:
            self._setpoints = tuple(self._row_setpoint(k) for k in range(len(self)))
        return self._setpoints

    @property
    def table(self) -> np.ndarray:
        return self._data

    @property
    def times(self) -> np.ndarray:
        return self._data[:, _T]

    @property
    def positions(self) -> np.ndarray:
        return self._data[:, _P]

    @property
    def t_start(self) -> float:
        return float(self._data[0, _T])

    @property
    def t_end(self) -> float:
        return float(self._data[-1, _T])

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def _make(self, t, row, q, tau):
        f = row[_F]
        state = QuadState(
            t=t, p=row[_P], q=q, v=row[_V], w=row[_W], a=row[_A], tau=tau,
            j=row[_J], s=row[_S], fd=f, f=f,
        )
        return Setpoint(state, Command.from_thrusts(t, f))

    def _row_setpoint(self, k):
        row = self._data[k]
        return self._make(float(row[_T]), row, row[_Q], self._tau[k])

    def _locate(self, t):
        times = self._data[:, _T]
        if t <= times[0]:
            return 0, 0.0
        if t >= times[-1]:
            return len(times) - 1, 0.0
        k = int(np.searchsorted(times, t, side="right")) - 1
        return k, (t - times[k]) / (times[k + 1] - times[k])

    def setpoint_at(self, t: float) -> Setpoint:
        """Interpolated setpoint at ``t``, clamped to the first/last sample.

        The returned setpoint is stamped with the query time.
        """
        k, frac = self._locate(t)
        if frac == 0.0:
            sp = self.setpoints[k]
            return sp if sp.t == t else self._make(float(t), self._data[k], self._data[k, _Q], self._tau[k])
        r0, r1 = self._data[k], self._data[k + 1]
        row = r0 + frac * (r1 - r0)
        q = quat_slerp(r0[_Q], r1[_Q], frac)
        tau = self._tau[k] + frac * (self._tau[k + 1] - self._tau[k])
        return self._make(float(t), row, q, tau)

    def position_at(self, t: float) -> np.ndarray:
        k, frac = self._locate(t)
        if frac == 0.0:
            return np.array(self._data[k, _P])
        return self._data[k, _P] + frac * (self._data[k + 1, _P] - self._data[k, _P])

    def positions_at(self, times) -> np.ndarray:
        """Vectorized linear interpolation of positions (clamped at the ends)."""
        times = np.asarray(times, dtype=float)
        return np.column_stack([np.interp(times, self.times, self._data[:, 1 + i]) for i in range(3)])
