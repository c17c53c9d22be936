from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import dynamics
from ..core import GRAVITY


@dataclass(frozen=True, eq=False)
class ImuSample:
    """Gyro [rad/s] and specific force [m/s^2], both in the body frame."""

    t: float
    gyro: np.ndarray
    accel: np.ndarray

    @property
    def valid(self) -> bool:
        return bool(np.isfinite(self.t) and np.all(np.isfinite(self.gyro)) and np.all(np.isfinite(self.accel)))


class ImuSimulator:
    """Synthesizes IMU samples from the true state.

    White noise densities and bias random walks are in SI units per sqrt(Hz);
    defaults are configuration, not measured values.
    """

    def __init__(
        self,
        rate: float = 500.0,
        gyro_noise: float = 1e-3,
        accel_noise: float = 1e-2,
        gyro_bias_walk: float = 1e-5,
        accel_bias_walk: float = 1e-4,
        seed: int = 0,
        g: float = GRAVITY,
    ):
        self.period = 1.0 / rate
        self.gyro_noise = gyro_noise
        self.accel_noise = accel_noise
        self.gyro_bias_walk = gyro_bias_walk
        self.accel_bias_walk = accel_bias_walk
        self.g = g
        self.rng = np.random.default_rng(seed)
        self.gyro_bias = np.zeros(3)
        self.accel_bias = np.zeros(3)
        self._next = None

    def maybe_sample(self, t: float, x: np.ndarray, a_world: np.ndarray) -> ImuSample | None:
        if self._next is None:
            self._next = t
        if t + 1e-9 < self._next:
            return None
        self._next += self.period
        dt = self.period
        sq = np.sqrt(1.0 / dt)
        self.gyro_bias = self.gyro_bias + self.gyro_bias_walk * np.sqrt(dt) * self.rng.standard_normal(3)
        self.accel_bias = self.accel_bias + self.accel_bias_walk * np.sqrt(dt) * self.rng.standard_normal(3)
        R = dynamics.rotation(x[3:7])
        specific_force = R.T @ (a_world + np.array([0.0, 0.0, self.g]))
        gyro = x[10:13] + self.gyro_bias + self.gyro_noise * sq * self.rng.standard_normal(3)
        accel = specific_force + self.accel_bias + self.accel_noise * sq * self.rng.standard_normal(3)
        return ImuSample(t, gyro, accel)
