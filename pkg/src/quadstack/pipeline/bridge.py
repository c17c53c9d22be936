"""Bridges deliver low-level commands to a sink (simulator or command log)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO

import numpy as np

from ..core import Command
from ..errors import BridgeError, InvalidArgumentError

COMMAND_LOG_HEADER = "t,mode,f1,f2,f3,f4,ct,wx,wy,wz"


@dataclass(frozen=True)
class Ack:
    """Acknowledgement: send timestamp and (for delayed sinks) expected application time."""

    sent_at: float
    applies_at: float


class Bridge:
    """Abstract command sink."""

    def __init__(self):
        self.closed = False
        self.sent = 0

    def send(self, cmd: Command, now: float | None = None) -> Ack:
        if self.closed:
            raise BridgeError(f"{type(self).__name__} is closed")
        if not cmd.valid:
            raise InvalidArgumentError("refusing to send a non-finite command")
        t = cmd.t if now is None else float(now)
        ack = self._deliver(cmd, t)
        self.sent += 1
        return ack

    def _deliver(self, cmd: Command, t: float) -> Ack:
        raise NotImplementedError

    def close(self):
        self.closed = True


class SimBridge(Bridge):
    """Pushes commands into a :class:`~quadstack.simulator.Simulator` delay line."""

    def __init__(self, simulator):
        super().__init__()
        self.simulator = simulator

    def _deliver(self, cmd, t):
        return Ack(t, self.simulator.send(cmd, t))


def command_log_row(cmd: Command, t: float | None = None) -> str:
    """CSV row ``t,mode,f1..f4,ct,wx,wy,wz`` with ``nan`` for the inactive mode's fields."""
    nan = math.nan
    if cmd.is_single_rotor:
        vals = [*cmd.thrusts, nan, nan, nan, nan]
        mode = "thrusts"
    else:
        vals = [nan, nan, nan, nan, cmd.collective_thrust, *cmd.bodyrate]
        mode = "ctbr"
    stamp = cmd.t if t is None else t
    return ",".join([f"{stamp:.17g}", mode] + [f"{float(v):.17g}" for v in vals])


class LogBridge(Bridge):
    """Appends every command as one CSV row to a stream or file."""

    def __init__(self, destination: str | IO[str]):
        super().__init__()
        if hasattr(destination, "write"):
            self._fh = destination
            self._owns = False
        else:
            self._fh = open(destination, "w", newline="\n", encoding="ascii")
            self._owns = True
        self._fh.write(COMMAND_LOG_HEADER + "\n")

    def _deliver(self, cmd, t):
        self._fh.write(command_log_row(cmd, t) + "\n")
        return Ack(t, t)

    def close(self):
        if not self.closed and self._owns:
            self._fh.close()
        super().close()


class NullBridge(Bridge):
    """Discards commands (useful for offline controller evaluation)."""

    def _deliver(self, cmd, t):
        return Ack(t, t)


def parse_command_log(text: str) -> list[tuple[float, str, np.ndarray]]:
    """Parse a command log back into ``(t, mode, values[8])`` tuples."""
    lines = text.strip("\n").split("\n")
    if not lines or lines[0] != COMMAND_LOG_HEADER:
        raise InvalidArgumentError("not a command log")
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append((float(f[0]), f[1], np.array([float(x) for x in f[2:]])))
    return out
