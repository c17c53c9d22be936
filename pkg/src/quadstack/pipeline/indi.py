"""Incremental nonlinear dynamic inversion (INDI) inner loop.

Instead of trusting the torque model, INDI measures the angular acceleration
and the torque currently produced by the rotors and commands only the torque
increment needed to reach the desired angular acceleration::

    tau_cmd = tau_f + J (alpha_des - alpha_f)

Gyro and rotor torque are low-passed by the same second-order Butterworth
filter so that the two are synchronized; ``alpha_f`` is the finite difference
of the filtered gyro.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.signal import butter

from ..core import Command, QuadrotorModel, QuadState, allocate, allocate_inverse, cross3
from ..errors import InvalidArgumentError
from .config import IndiConfig


class LowPass2:
    """Second-order Butterworth low-pass on vector signals (transposed direct form II).

    The first sample initializes the filter at steady state.
    """

    def __init__(self, cutoff_hz: float, rate_hz: float, dim: int):
        if not 0 < cutoff_hz:
            raise InvalidArgumentError("cutoff must be positive")
        # keep the cutoff strictly below Nyquist
        wn = min(cutoff_hz / (0.5 * rate_hz), 0.95)
        b, a = butter(2, wn)
        self.b = b / a[0]
        self.a = a / a[0]
        self.dim = dim
        self._z = None

    def reset(self):
        self._z = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        b, a = self.b, self.a
        if self._z is None:
            # filter state at rest for a constant input equal to x (unit DC gain)
            z2 = (b[2] - a[2]) * x
            z1 = (b[1] - a[1]) * x + z2
            self._z = np.vstack([z1, z2])
        z = self._z
        y = b[0] * x + z[0]
        z0 = b[1] * x - a[1] * y + z[1]
        z1 = b[2] * x - a[2] * y
        self._z = np.vstack([z0, z1])
        return y


class IndiOutput(NamedTuple):
    command: Command
    clamped: bool
    fallback: bool


def control_indi(
    outer_cmd: Command,
    state: QuadState,
    alpha_meas,
    tau_meas,
    model: QuadrotorModel | None = None,
    rate_gains=(20.0, 20.0, 10.0),
) -> IndiOutput:
    """Single-rotor thrusts from an outer command using incremental inversion.

    ``outer_cmd`` may be a collective-thrust/bodyrate command (desired angular
    acceleration ``rate_gains * (w_cmd - w)``) or a single-rotor command, whose
    torque defines the desired angular acceleration. If ``alpha_meas`` or
    ``tau_meas`` is ``None`` the plain model inversion is used and
    ``fallback`` is set.
    """
    model = model or QuadrotorModel()
    J = model.inertia_vector
    w = np.asarray(state.w)
    gyro_torque = cross3(w, J * w)
    if outer_cmd.is_single_rotor:
        wrench = allocate(outer_cmd.thrusts, model)
        collective = wrench.collective_thrust
        alpha_des = (wrench.torque - gyro_torque) / J
    else:
        collective = outer_cmd.collective_thrust
        alpha_des = np.asarray(rate_gains, dtype=float) * (outer_cmd.bodyrate - w)
    fallback = alpha_meas is None or tau_meas is None
    if fallback:
        torque = J * alpha_des + gyro_torque
    else:
        torque = np.asarray(tau_meas, dtype=float) + J * (alpha_des - np.asarray(alpha_meas, dtype=float))
    collective = float(np.clip(collective, 4.0 * model.f_min, 4.0 * model.f_max))
    thrusts, clamped = allocate_inverse(collective, torque, model)
    return IndiOutput(Command.from_thrusts(outer_cmd.t, thrusts), clamped, fallback)


class IndiController:
    """INDI with its own filtered angular-acceleration estimate, updated once per cycle.

    Rotor thrusts are taken from the state when available (``state.f``);
    otherwise the previously commanded thrusts are passed through a
    first-order motor model.
    """

    def __init__(self, model: QuadrotorModel | None = None, config: IndiConfig = IndiConfig(),
                 rate_hz: float = 100.0):
        self.model = model or QuadrotorModel()
        self.config = config
        self.rate_hz = float(rate_hz)
        self._gyro_filter = LowPass2(config.cutoff_hz, rate_hz, 3)
        self._torque_filter = LowPass2(config.cutoff_hz, rate_hz, 3)
        self._w_prev = None
        self._alpha = None
        self._tau = None
        self._last_t = None
        self._motor_thrusts = None
        self.fallbacks = 0
        self.clamps = 0

    def reset(self):
        self._gyro_filter.reset()
        self._torque_filter.reset()
        self._w_prev = self._alpha = self._tau = self._last_t = self._motor_thrusts = None

    @property
    def angular_acceleration(self):
        return None if self._alpha is None else self._alpha.copy()

    def _measured_thrusts(self, state):
        if np.any(state.f != 0.0):
            return np.asarray(state.f)
        if self._motor_thrusts is None:
            return np.full(4, self.model.hover_thrust)
        return self._motor_thrusts

    def update(self, state: QuadState):
        """Feed one gyro/rotor-thrust sample (call once per control cycle)."""
        if self._last_t is not None and state.t <= self._last_t:
            return
        w_f = self._gyro_filter(state.w)
        tau_f = self._torque_filter(allocate(self._measured_thrusts(state), self.model).torque)
        if self._w_prev is not None:
            self._alpha = (w_f - self._w_prev) * self.rate_hz
            self._tau = tau_f
        self._w_prev = w_f
        self._last_t = state.t

    def control(self, outer_cmd: Command, state: QuadState) -> IndiOutput:
        self.update(state)
        out = control_indi(outer_cmd, state, self._alpha, self._tau, self.model, self.config.rate_gains)
        if out.fallback:
            self.fallbacks += 1
        if out.clamped:
            self.clamps += 1
        # first-order motor model for the thrust feedback when none is measured
        k = -np.expm1(-1.0 / (self.rate_hz * self.model.motor_tc))
        prev = self._measured_thrusts(state)
        self._motor_thrusts = prev + k * (out.command.thrusts - prev)
        return out
