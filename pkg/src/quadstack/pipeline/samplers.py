"""Samplers turning a reference into the receding-horizon list of setpoints."""

from __future__ import annotations

import numpy as np

from ..core import Setpoint
from ..errors import InvalidArgumentError
from ..references.types import Reference, SampledTrajectory


def sample_time_based(ref: Reference, t: float, horizon: int = 1, dt_h: float = 0.05) -> list[Setpoint]:
    """Setpoints at ``t, t + dt_h, ...`` (``horizon`` of them), clamped to the reference span."""
    if horizon < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    return [ref.setpoint_at(t + k * dt_h) for k in range(horizon)]


def sample_position_based(
    traj: SampledTrajectory,
    current_p,
    previous_progress: float,
    horizon: int = 1,
    dt_h: float = 0.05,
    window: float = 0.5,
) -> tuple[list[Setpoint], float]:
    """Progress along ``traj`` closest to ``current_p`` within a forward window.

    Candidates are ``previous_progress`` and every stored sample time in
    ``(previous_progress, previous_progress + window]``; the earliest minimizer
    of the distance wins, so progress never decreases and advances by at most
    ``window`` per call. Progress is expressed in trajectory time.
    """
    if not isinstance(traj, SampledTrajectory):
        raise InvalidArgumentError("position-based sampling needs a SampledTrajectory")
    if not window > 0:
        raise InvalidArgumentError("window must be positive")
    t0, t1 = traj.t_start, traj.t_end
    prev = min(max(float(previous_progress), t0), t1)
    times = traj.times
    lo = int(np.searchsorted(times, prev, side="right"))
    hi = int(np.searchsorted(times, prev + window, side="right"))
    cand_t = np.concatenate(([prev], times[lo:hi]))
    cand_p = np.vstack([traj.position_at(prev), traj.positions[lo:hi]])
    p = np.asarray(current_p, dtype=float).reshape(3)
    if np.all(np.isfinite(p)):
        d2 = np.sum((cand_p - p) ** 2, axis=1)
        best = float(cand_t[int(np.argmin(d2))])
    else:
        best = prev
    return sample_time_based(traj, best, horizon, dt_h), best


class TimeSampler:
    def __init__(self, ref: Reference):
        self.ref = ref
        self.progress = ref.t_start

    def sample(self, now: float, p, horizon: int, dt_h: float) -> list[Setpoint]:
        self.progress = now
        return sample_time_based(self.ref, now, horizon, dt_h)


class PositionSampler:
    def __init__(self, ref: SampledTrajectory, window: float = 0.5):
        if not isinstance(ref, SampledTrajectory):
            raise InvalidArgumentError("position-based sampling needs a SampledTrajectory")
        self.ref = ref
        self.window = window
        self.progress = ref.t_start

    def sample(self, now: float, p, horizon: int, dt_h: float) -> list[Setpoint]:
        sps, self.progress = sample_position_based(self.ref, p, self.progress, horizon, dt_h, self.window)
        return sps
