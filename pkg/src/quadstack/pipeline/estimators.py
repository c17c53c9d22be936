"""State estimators: feed-through of external estimates and an IMU-driven EKF."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import chi2

from ..core import (
    GRAVITY,
    QuadState,
    quat_exp,
    quat_log,
    quat_multiply,
    quat_conjugate,
    quat_normalize,
    quat_to_rotation,
    quaternion_integrate,
    skew,
)
from ..errors import InvalidArgumentError, NumericalError
from ..simulator.imu import ImuSample


class FeedthroughEstimator:
    """Passes external state estimates (motion capture, ground truth) through.

    The output is re-stamped to the query time and its quaternion renormalized.
    A measurement older than the previous one is rejected and the previous
    estimate is held. The estimate becomes stale when no measurement arrived
    for ``timeout`` seconds.
    """

    def __init__(self, timeout: float = 0.02):
        if not timeout > 0:
            raise InvalidArgumentError("timeout must be positive")
        self.timeout = float(timeout)
        self._last: QuadState | None = None
        self.rejected = 0

    def update(self, ext_state: QuadState) -> bool:
        """Ingest a measurement; returns False if it was rejected."""
        if not ext_state.valid:
            self.rejected += 1
            return False
        if self._last is not None and ext_state.t < self._last.t:
            self.rejected += 1
            return False
        self._last = ext_state
        return True

    @property
    def last_measurement_time(self) -> float | None:
        return None if self._last is None else self._last.t

    def stale(self, now: float) -> bool:
        return self._last is None or now - self._last.t > self.timeout + 1e-9

    def estimate(self, now: float | None = None) -> QuadState | None:
        if self._last is None:
            return None
        t = self._last.t if now is None else now
        return self._last.replace(t=t, q=quat_normalize(self._last.q))

    def reset(self):
        self._last = None


def estimator_feedthrough(ext_state: QuadState, now: float | None = None) -> QuadState:
    """Return ``ext_state`` re-stamped to ``now`` with a unit quaternion."""
    if not ext_state.valid:
        raise InvalidArgumentError("external state is not finite")
    return ext_state.replace(t=ext_state.t if now is None else now, q=quat_normalize(ext_state.q))


# ---------------------------------------------------------------------------
# Error-state EKF
# ---------------------------------------------------------------------------

# error-state layout
_P, _V, _TH, _BW, _BA = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)
NX_ERR = 15


@dataclass
class EkfState:
    """Nominal state and 15x15 error covariance (p, v, attitude, gyro bias, accel bias).

    The attitude error is a rotation vector in the body frame:
    ``q_true = q ⊗ exp(dtheta)``.
    """

    t: float = 0.0
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    bw: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    P: np.ndarray = field(default_factory=lambda: np.eye(NX_ERR) * 1e-4)
    # last specific force / gyro, for reporting acceleration and bodyrate
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "EkfState":
        return EkfState(
            self.t, self.p.copy(), self.v.copy(), self.q.copy(), self.bw.copy(), self.ba.copy(),
            self.P.copy(), self.a.copy(), self.w.copy(),
        )

    def to_quad_state(self) -> QuadState:
        return QuadState(t=self.t, p=self.p, q=self.q, v=self.v, w=self.w, a=self.a, bw=self.bw, ba=self.ba)


@dataclass(frozen=True)
class EkfNoise:
    gyro: float = 1e-3
    accel: float = 1e-2
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4


@lru_cache(maxsize=16)
def _gate_threshold(probability: float, dof: int = 6) -> float:
    return float(chi2.ppf(probability, dof))


def _check_psd(P):
    eig = np.linalg.eigvalsh(P)
    if eig[0] < -1e-9:
        raise NumericalError(f"covariance lost positive semi-definiteness (min eigenvalue {eig[0]:.3e})")


def ekf_propagate(est: EkfState, imu: ImuSample, dt: float, noise: EkfNoise = EkfNoise(), g: float = GRAVITY) -> EkfState:
    """Strapdown propagation over ``dt`` with the IMU sample held constant.

    Returns a new :class:`EkfState`; the input is not modified.
    """
    if not 0.0 < dt <= 0.1:
        raise InvalidArgumentError("dt must be in (0, 0.1]")
    if not imu.valid:
        raise InvalidArgumentError("non-finite IMU sample")
    R = quat_to_rotation(est.q)
    f_b = imu.accel - est.ba
    w_b = imu.gyro - est.bw
    a = R @ f_b + np.array([0.0, 0.0, -g])
    out = est.copy()
    out.t = est.t + dt
    out.p = est.p + est.v * dt + 0.5 * a * dt * dt
    out.v = est.v + a * dt
    out.q = quaternion_integrate(est.q, w_b, dt)
    out.a = a
    out.w = w_b

    F = np.zeros((NX_ERR, NX_ERR))
    F[_P, _V] = np.eye(3)
    F[_V, _TH] = -R @ skew(f_b)
    F[_V, _BA] = -R
    F[_TH, _TH] = -skew(w_b)
    F[_TH, _BW] = -np.eye(3)
    Phi = np.eye(NX_ERR) + F * dt
    Qd = np.zeros(NX_ERR)
    Qd[_V] = noise.accel**2 * dt
    Qd[_TH] = noise.gyro**2 * dt
    Qd[_BW] = noise.gyro_bias_walk**2 * dt
    Qd[_BA] = noise.accel_bias_walk**2 * dt
    P = Phi @ est.P @ Phi.T + np.diag(Qd)
    out.P = 0.5 * (P + P.T)
    _check_psd(out.P)
    return out


@dataclass(frozen=True)
class PoseUpdateResult:
    state: EkfState
    innovation: np.ndarray
    mahalanobis: float
    accepted: bool


def ekf_update_pose(
    est: EkfState,
    p_meas,
    q_meas,
    position_noise: float = 1e-3,
    attitude_noise: float = 1e-3,
    gate_probability: float = 0.999,
) -> PoseUpdateResult:
    """Pose (position + attitude) measurement update in Joseph form.

    Measurements whose squared Mahalanobis distance exceeds the chi-square
    quantile ``gate_probability`` (6 DOF) are rejected and the state returned
    unchanged.
    """
    p_meas = np.asarray(p_meas, dtype=float).reshape(3)
    q_meas = np.asarray(q_meas, dtype=float).reshape(4)
    if not (np.all(np.isfinite(p_meas)) and np.all(np.isfinite(q_meas))) or np.linalg.norm(q_meas) < 1e-9:
        raise InvalidArgumentError("pose measurement must be finite with a non-zero quaternion")
    q_meas = quat_normalize(q_meas)
    dq = quat_multiply(quat_conjugate(est.q), q_meas)
    y = np.concatenate([p_meas - est.p, quat_log(dq)])
    H = np.zeros((6, NX_ERR))
    H[0:3, _P] = np.eye(3)
    H[3:6, _TH] = np.eye(3)
    Rm = np.diag([position_noise**2] * 3 + [attitude_noise**2] * 3)
    S = H @ est.P @ H.T + Rm
    S = 0.5 * (S + S.T)
    d2 = float(y @ np.linalg.solve(S, y))
    if d2 > _gate_threshold(gate_probability):
        return PoseUpdateResult(est.copy(), y, d2, False)
    K = np.linalg.solve(S, H @ est.P).T
    dx = K @ y
    IKH = np.eye(NX_ERR) - K @ H
    P = IKH @ est.P @ IKH.T + K @ Rm @ K.T
    out = est.copy()
    out.p = est.p + dx[_P]
    out.v = est.v + dx[_V]
    out.q = quat_normalize(quat_multiply(est.q, quat_exp(dx[_TH])))
    out.bw = est.bw + dx[_BW]
    out.ba = est.ba + dx[_BA]
    out.P = 0.5 * (P + P.T)
    _check_psd(out.P)
    return PoseUpdateResult(out, y, d2, True)


class EkfEstimator:
    """IMU-propagated EKF with pose updates, usable as a pilot estimator."""

    def __init__(self, initial: QuadState | None = None, noise: EkfNoise = EkfNoise(),
                 position_noise: float = 1e-3, attitude_noise: float = 1e-3,
                 gate_probability: float = 0.999, timeout: float = 0.02, g: float = GRAVITY):
        self.noise = noise
        self.position_noise = position_noise
        self.attitude_noise = attitude_noise
        self.gate_probability = gate_probability
        self.timeout = float(timeout)
        self.g = g
        self.rejected = 0
        self.last_innovation = np.zeros(6)
        self._state: EkfState | None = None
        self._last_imu: ImuSample | None = None
        self._last_measurement: float | None = None
        if initial is not None:
            self.initialize(initial)

    def initialize(self, s: QuadState):
        self._state = EkfState(t=s.t, p=np.array(s.p), v=np.array(s.v), q=np.array(s.q),
                               bw=np.array(s.bw), ba=np.array(s.ba), w=np.array(s.w), a=np.array(s.a))
        self._last_measurement = s.t

    @property
    def state(self) -> EkfState | None:
        return self._state

    @property
    def last_measurement_time(self) -> float | None:
        return self._last_measurement

    def update_imu(self, imu: ImuSample):
        if self._state is None:
            self._last_imu = imu
            return
        dt = imu.t - self._state.t
        if dt > 0:
            self._state = ekf_propagate(self._state, imu, min(dt, 0.1), self.noise, self.g)
            self._state.t = imu.t
        self._last_imu = imu
        self._last_measurement = imu.t

    def update_pose(self, t: float, p, q) -> bool:
        if self._state is None:
            self._state = EkfState(t=t, p=np.asarray(p, float).copy(), q=quat_normalize(q))
            self._last_measurement = t
            return True
        res = ekf_update_pose(self._state, p, q, self.position_noise, self.attitude_noise, self.gate_probability)
        self.last_innovation = res.innovation
        if not res.accepted:
            self.rejected += 1
            return False
        self._state = res.state
        return True

    def update(self, measurement) -> bool:
        """Ingest an :class:`ImuSample` or a pose given as a :class:`QuadState`."""
        if isinstance(measurement, ImuSample):
            self.update_imu(measurement)
            return True
        if isinstance(measurement, QuadState):
            return self.update_pose(measurement.t, measurement.p, measurement.q)
        raise InvalidArgumentError(f"unsupported measurement type {type(measurement).__name__}")

    def stale(self, now: float) -> bool:
        return self._last_measurement is None or now - self._last_measurement > self.timeout + 1e-9

    def estimate(self, now: float | None = None) -> QuadState | None:
        if self._state is None:
            return None
        s = self._state.to_quad_state()
        return s if now is None else s.replace(t=now)
