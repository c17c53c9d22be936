"""Plain-text CSV trajectory format.

One header line followed by one setpoint per row, values written with 17
significant digits (enough to round-trip any float64), ``\\n`` line endings::

    t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,ax,ay,az,jx,jy,jz,sx,sy,sz,f1,f2,f3,f4
"""

from __future__ import annotations

import io
import math
import os
from typing import IO, Union

import numpy as np

from ..errors import TrajectoryFormatError
from .types import TRAJECTORY_COLUMNS, SampledTrajectory

HEADER = ",".join(TRAJECTORY_COLUMNS)
PathOrStream = Union[str, os.PathLike, IO[str]]


def format_row(values) -> str:
    return ",".join(f"{v:.17g}" for v in values)


def dumps(traj: SampledTrajectory) -> str:
    lines = [HEADER]
    lines.extend(format_row(row) for row in traj.table)
    return "\n".join(lines) + "\n"


def trajectory_save(traj: SampledTrajectory, destination: PathOrStream) -> None:
    text = dumps(traj)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w", newline="\n", encoding="ascii") as fh:
        fh.write(text)


def loads(text: str, source: str | None = None) -> SampledTrajectory:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TrajectoryFormatError("empty file", line=1, source=source)
    header = lines[0].rstrip("\r")
    if header != HEADER:
        raise TrajectoryFormatError(f"unexpected header {header!r}; expected {HEADER!r}", line=1, source=source)
    ncol = len(TRAJECTORY_COLUMNS)
    rows = []
    prev_t = -math.inf
    for idx, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line.strip():
            raise TrajectoryFormatError("blank line", line=idx, source=source)
        fields = line.split(",")
        if len(fields) != ncol:
            raise TrajectoryFormatError(f"expected {ncol} columns, found {len(fields)}", line=idx, source=source)
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise TrajectoryFormatError(f"non-numeric value ({exc})", line=idx, source=source) from None
        if not all(math.isfinite(v) for v in values):
            raise TrajectoryFormatError("non-finite value", line=idx, source=source)
        if values[0] <= prev_t:
            raise TrajectoryFormatError(
                f"timestamp {values[0]!r} does not increase (previous {prev_t!r})", line=idx, source=source
            )
        q = values[4:8]
        if math.sqrt(sum(c * c for c in q)) < 1e-9:
            raise TrajectoryFormatError("zero quaternion", line=idx, source=source)
        prev_t = values[0]
        rows.append(values)
    if len(rows) < 2:
        raise TrajectoryFormatError("need at least two setpoints", line=len(lines), source=source)
    return SampledTrajectory.from_table(np.array(rows))


def trajectory_load(source: PathOrStream) -> SampledTrajectory:
    if hasattr(source, "read"):
        return loads(source.read(), getattr(source, "name", None))
    with open(source, "r", newline="", encoding="ascii") as fh:
        return loads(fh.read(), str(source))


def roundtrip(traj: SampledTrajectory) -> SampledTrajectory:
    buf = io.StringIO()
    trajectory_save(traj, buf)
    return loads(buf.getvalue())
