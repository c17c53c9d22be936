"""Guard: spatial bounding-box safety monitor."""

from __future__ import annotations

import enum

import numpy as np

from ..core import QuadState
from .config import GuardConfig


class GuardStatus(enum.Enum):
    OK = "OK"
    VIOLATION = "VIOLATION"


def guard_check(state: QuadState, cfg: GuardConfig) -> GuardStatus:
    """VIOLATION iff the position is non-finite or strictly outside the closed box."""
    if not cfg.enabled:
        return GuardStatus.OK
    p = np.asarray(state.p)
    if not np.all(np.isfinite(p)) or not state.valid:
        return GuardStatus.VIOLATION
    if np.any(p < np.asarray(cfg.box_min)) or np.any(p > np.asarray(cfg.box_max)):
        return GuardStatus.VIOLATION
    return GuardStatus.OK


class Guard:
    """Latching monitor: once violated it stays violated until :meth:`reset`."""

    def __init__(self, cfg: GuardConfig):
        self.cfg = cfg
        self.latched = False
        self.entry_state: QuadState | None = None

    def check(self, state: QuadState) -> GuardStatus:
        if self.latched:
            return GuardStatus.VIOLATION
        status = guard_check(state, self.cfg)
        if status is GuardStatus.VIOLATION:
            self.latched = True
            self.entry_state = state
        return status

    def reset(self):
        self.latched = False
        self.entry_state = None
