from __future__ import annotations

from collections import deque

from ..core import Command

# absorbs float round-off when comparing quantized release times
_TIME_EPS = 1e-9


class DelayLine:
    """FIFO transport delay for commands.

    A command sent at ``send_time`` is released by the first :meth:`pop` whose
    ``now`` satisfies ``now >= send_time + latency``. Commands are released in
    send order; when several are due at once the newest due command wins and
    the older ones are dropped, as a serial link would overwrite them.
    """

    def __init__(self, latency: float = 0.0):
        if latency < 0:
            raise ValueError("latency must be non-negative")
        self.latency = float(latency)
        self._queue: deque[tuple[float, Command]] = deque()

    def __len__(self):
        return len(self._queue)

    def push(self, cmd: Command, send_time: float) -> float:
        """Queue a command; returns its release time."""
        release = float(send_time) + self.latency
        if self._queue and release < self._queue[-1][0]:
            raise ValueError("commands must be pushed in non-decreasing time order")
        self._queue.append((release, cmd))
        return release

    def pop(self, now: float) -> Command | None:
        released = None
        while self._queue and self._queue[0][0] <= now + _TIME_EPS:
            released = self._queue.popleft()[1]
        return released

    def clear(self):
        self._queue.clear()


def delay_push(line: DelayLine, cmd: Command, send_time: float) -> float:
    return line.push(cmd, send_time)


def delay_pop(line: DelayLine, now: float) -> Command | None:
    return line.pop(now)
