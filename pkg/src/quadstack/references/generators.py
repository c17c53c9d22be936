"""Circle and lemniscate trajectories sampled at a fixed rate.

Both curves are traversed by arc length at a constant cruise speed, optionally
with cosine-shaped speed ramps at start and end. Time derivatives up to snap
are exact: the curve parameter is expanded as a Taylor series in time by
Picard iteration of ``dtheta/dt = ds/dt * dtheta/ds``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ellipk, ellipkinc

from ..core import QuadrotorModel
from ..errors import InvalidArgumentError
from ._jet import Jet
from .flatness import FlatOutput, flatness_setpoint
from .types import SampledTrajectory

SAMPLE_RATE = 100.0
_ORDER = 4


class _SpeedProfile:
    """Arc length s(t) with cosine ramps of duration ``ramp`` at both ends."""

    def __init__(self, speed, length, ramp):
        self.v = speed
        self.ramp = ramp
        cruise = length - speed * ramp
        if cruise < -1e-12:
            raise InvalidArgumentError("speed ramps are longer than the trajectory")
        self.cruise_time = max(cruise, 0.0) / speed
        self.duration = 2.0 * ramp + self.cruise_time
        self.length = length

    def _ramp_arc(self, tau):
        T = self.ramp
        return 0.5 * self.v * (tau - T / math.pi * math.sin(math.pi * tau / T))

    def arc_length(self, t):
        T, v = self.ramp, self.v
        if T > 0 and t < T:
            return self._ramp_arc(t)
        s_in = 0.5 * v * T
        if t <= T + self.cruise_time:
            return s_in + v * (t - T)
        tau = min(self.duration - t, T)
        return self.length - self._ramp_arc(max(tau, 0.0))

    def speed_jet(self, t, order):
        """Series of ds/dt around ``t``."""
        T, v = self.ramp, self.v
        if T > 0 and t < T:
            phase = Jet.variable(t, order) * (math.pi / T)
            _, c = phase.sin_cos()
            return (1.0 - c) * (0.5 * v)
        if T > 0 and t >= T + self.cruise_time:
            phase = (self.duration - Jet.variable(t, order)) * (math.pi / T)
            _, c = phase.sin_cos()
            return (1.0 - c) * (0.5 * v)
        return Jet.constant(v, order)


class _Curve:
    length: float

    def position(self, theta: Jet) -> tuple[Jet, Jet]:
        raise NotImplementedError

    def dtheta_ds(self, theta: Jet) -> Jet:
        raise NotImplementedError

    def theta_of_s(self, s: float) -> float:
        raise NotImplementedError


class _Circle(_Curve):
    def __init__(self, radius):
        self.r = radius
        self.length = 2.0 * math.pi * radius

    def position(self, theta):
        s, c = theta.sin_cos()
        return c * self.r, s * self.r

    def dtheta_ds(self, theta):
        return Jet.constant(1.0 / self.r, theta.order)

    def theta_of_s(self, s):
        return s / self.r


class _Lemniscate(_Curve):
    """Bernoulli lemniscate x = A cos/(1+sin^2), y = A sin cos/(1+sin^2).

    Its arc-length element is ``A / sqrt(1 + sin^2 theta)``, so the arc length
    is an incomplete elliptic integral of the first kind with parameter -1.
    """

    def __init__(self, amplitude):
        self.A = amplitude
        self._quarter = ellipk(-1.0)
        self.length = 4.0 * amplitude * self._quarter

    def position(self, theta):
        s, c = theta.sin_cos()
        denom = 1.0 + s * s
        return c * self.A / denom, s * c * self.A / denom

    def dtheta_ds(self, theta):
        s, _ = theta.sin_cos()
        return (1.0 + s * s).sqrt() * (1.0 / self.A)

    def _arc(self, theta):
        # ellipkinc only accepts |phi| <= pi/2 reliably; use the half-period shift
        k = math.floor(theta / math.pi + 0.5)
        phi = theta - k * math.pi
        return self.A * (2.0 * k * self._quarter + ellipkinc(phi, -1.0))

    def theta_of_s(self, s):
        theta = s / self.length * 2.0 * math.pi
        for _ in range(50):
            err = self._arc(theta) - s
            step = err * math.sqrt(1.0 + math.sin(theta) ** 2) / self.A
            theta -= step
            if abs(step) < 1e-15:
                break
        return theta


def _flat_outputs(curve: _Curve, profile: _SpeedProfile, times, center, z):
    out = []
    for t in times:
        theta0 = curve.theta_of_s(profile.arc_length(t))
        sdot = profile.speed_jet(t, _ORDER)
        dtheta = Jet.constant(0.0, _ORDER)
        for _ in range(_ORDER + 1):
            theta = dtheta + theta0
            dtheta = (sdot * curve.dtheta_ds(theta)).integral(0.0)
        px, py = curve.position(dtheta + theta0)
        dx, dy = px.derivatives(), py.derivatives()
        derivs = np.zeros((_ORDER + 1, 3))
        derivs[:, 0] = dx
        derivs[:, 1] = dy
        derivs[0] += np.array([center[0], center[1], z])
        out.append(FlatOutput(t=t, p=derivs[0], v=derivs[1], a=derivs[2], j=derivs[3], s=derivs[4]))
    return out


def _sample_times(duration, rate):
    n = int(math.floor(duration * rate + 1e-9))
    times = [k / rate for k in range(n + 1)]
    if duration - times[-1] > 1e-9:
        times.append(duration)
    return times


def _generate(curve, center, speed, z, laps, ramp, model, rate):
    if not speed > 0:
        raise InvalidArgumentError("speed must be positive")
    if not laps > 0:
        raise InvalidArgumentError("laps must be positive")
    if ramp < 0:
        raise InvalidArgumentError("ramp duration must be non-negative")
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size not in (2, 3) or not np.all(np.isfinite(center)):
        raise InvalidArgumentError("center must be 2 or 3 finite coordinates")
    profile = _SpeedProfile(speed, laps * curve.length, ramp)
    times = _sample_times(profile.duration, rate)
    flats = _flat_outputs(curve, profile, times, center[:2], z)
    return SampledTrajectory([flatness_setpoint(f, model) for f in flats])


def generate_circle(
    center=(0.0, 0.0),
    radius: float = 4.0,
    speed: float = 5.0,
    z: float = 1.0,
    laps: float = 1.0,
    ramp: float = 0.0,
    model: QuadrotorModel | None = None,
    rate: float = SAMPLE_RATE,
) -> SampledTrajectory:
    """Counter-clockwise circle starting at ``center + (radius, 0)``."""
    if not radius > 0:
        raise InvalidArgumentError("radius must be positive")
    return _generate(_Circle(radius), center, speed, z, laps, ramp, model or QuadrotorModel(), rate)


def generate_lemniscate(
    center=(0.0, 0.0),
    amplitude: float = 5.0,
    speed: float = 5.0,
    z: float = 1.0,
    laps: float = 1.0,
    ramp: float = 0.0,
    model: QuadrotorModel | None = None,
    rate: float = SAMPLE_RATE,
) -> SampledTrajectory:
    """Bernoulli lemniscate with half-width ``amplitude`` starting at ``center + (amplitude, 0)``."""
    if not amplitude > 0:
        raise InvalidArgumentError("amplitude must be positive")
    return _generate(_Lemniscate(amplitude), center, speed, z, laps, ramp, model or QuadrotorModel(), rate)
