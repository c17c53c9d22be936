"""Pipeline, guard and controller configuration.

Configurations are frozen dataclasses. :func:`load_yaml` reads a YAML
document while remembering the source line of every key, and
:func:`build_config` turns nested mappings into dataclasses, so validation
errors can point at ``file:line`` together with the dotted key path.
"""

from __future__ import annotations

import dataclasses
import enum
import typing
from dataclasses import dataclass, field

import numpy as np
import yaml

from ..errors import ConfigError, InvalidArgumentError


class _ParsableEnum(enum.Enum):
    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().upper().replace("-", "_")
            if key in cls.__members__:
                return cls.__members__[key]
        raise InvalidArgumentError(
            f"unknown {cls.__name__} {value!r}; expected one of {[m.lower() for m in cls.__members__]}"
        )


class EstimatorKind(_ParsableEnum):
    FEEDTHROUGH = "feedthrough"
    EKF = "ekf"


class SamplerKind(_ParsableEnum):
    TIME = "time"
    POSITION = "position"


class OuterKind(_ParsableEnum):
    GEOMETRIC = "geometric"
    MPC = "mpc"


class InnerKind(_ParsableEnum):
    NONE = "none"
    INDI = "indi"


class BridgeKind(_ParsableEnum):
    SIM = "sim"
    LOG = "log"


def _vec3(value, name):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be a scalar or 3 finite values")
    return tuple(float(x) for x in arr)


def _nonneg3(value, name):
    out = _vec3(value, name)
    if any(x < 0 for x in out):
        raise InvalidArgumentError(f"{name} must be non-negative")
    return out


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator choice.

    ``timeout_periods`` is the number of control periods without a new
    measurement after which the estimate is considered stale. Noise densities
    configure the IMU-driven EKF (SI units per sqrt(Hz)).
    """

    kind: EstimatorKind = EstimatorKind.FEEDTHROUGH
    timeout_periods: float = 2.0
    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4
    pose_position_noise: float = 1e-3
    pose_attitude_noise: float = 1e-3
    gate_probability: float = 0.999

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind.parse(self.kind))
        if not self.timeout_periods > 0:
            raise InvalidArgumentError("timeout_periods must be positive")
        for name in ("gyro_noise", "accel_noise", "gyro_bias_walk", "accel_bias_walk",
                     "pose_position_noise", "pose_attitude_noise"):
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"{name} must be non-negative")
        if not 0.0 < self.gate_probability < 1.0:
            raise InvalidArgumentError("gate_probability must be in (0, 1)")


@dataclass(frozen=True)
class SamplerConfig:
    """``window`` [s] bounds how far the position-based sampler may advance per call."""

    kind: SamplerKind = SamplerKind.TIME
    window: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", SamplerKind.parse(self.kind))
        if not self.window > 0:
            raise InvalidArgumentError("sampler window must be positive")


@dataclass(frozen=True)
class GeometricGains:
    """Position/velocity gains and tilt (xy) / yaw (z) attitude gains."""

    kp: tuple = (4.0, 4.0, 6.0)
    kv: tuple = (3.0, 3.0, 4.0)
    kq_xy: float = 6.0
    kq_z: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "kp", _nonneg3(self.kp, "kp"))
        object.__setattr__(self, "kv", _nonneg3(self.kv, "kv"))
        if not (self.kq_xy >= 0 and self.kq_z >= 0):
            raise InvalidArgumentError("attitude gains must be non-negative")


@dataclass(frozen=True)
class MpcParams:
    """Horizon, node spacing, diagonal weights and solver limits.

    State weights apply to position, quaternion, velocity and bodyrate; the
    input weight penalizes deviation of each rotor thrust from the reference.
    ``delay_compensation`` [s] predicts the initial state forward over a known
    command latency using the inputs already issued (0 disables it).
    """

    N: int = 20
    dt: float = 0.05
    w_position: tuple = (200.0, 200.0, 500.0)
    w_orientation: tuple = (5.0, 5.0, 200.0)
    w_velocity: tuple = (10.0, 10.0, 10.0)
    w_bodyrate: tuple = (1.0, 1.0, 1.0)
    w_input: float = 1.0
    max_iterations: int = 10
    tolerance: float = 1e-6
    delay_compensation: float = 0.0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 5:
            raise InvalidArgumentError("MPC horizon N must be an integer >= 5")
        object.__setattr__(self, "N", int(self.N))
        if not self.dt > 0:
            raise InvalidArgumentError("MPC dt must be positive")
        for name in ("w_position", "w_orientation", "w_velocity", "w_bodyrate"):
            object.__setattr__(self, name, _nonneg3(getattr(self, name), name))
        if not self.w_input >= 0:
            raise InvalidArgumentError("w_input must be non-negative")
        if not any(x > 0 for x in self.w_position + self.w_orientation + self.w_velocity + self.w_bodyrate):
            raise InvalidArgumentError("at least one MPC state weight must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be a positive integer")
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        if not self.tolerance > 0:
            raise InvalidArgumentError("tolerance must be positive")
        if not 0.0 <= self.delay_compensation <= 1.0:
            raise InvalidArgumentError("delay_compensation must lie in [0, 1] s")

    @property
    def state_weights(self) -> np.ndarray:
        """Diagonal of the 13x13 state weight (quaternion w-component weighted like yaw/tilt mean)."""
        wq = self.w_orientation
        return np.array(
            [*self.w_position, float(np.mean(wq)), *wq, *self.w_velocity, *self.w_bodyrate]
        )


@dataclass(frozen=True)
class IndiConfig:
    """Inner-loop parameters: gyro-derivative filter cutoff and rate-loop gains."""

    cutoff_hz: float = 40.0
    rate_gains: tuple = (20.0, 20.0, 10.0)

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise InvalidArgumentError("cutoff_hz must be positive")
        object.__setattr__(self, "rate_gains", _nonneg3(self.rate_gains, "rate_gains"))


@dataclass(frozen=True)
class BridgeConfig:
    """Command sink; ``path`` is the CSV file of the log bridge.

    Externally supplied (feedthrough) commands older than ``feedthrough_timeout``
    seconds are replaced by a hover takeover.
    """

    kind: BridgeKind = BridgeKind.SIM
    path: str | None = None
    feedthrough_timeout: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", BridgeKind.parse(self.kind))
        if not self.feedthrough_timeout > 0:
            raise InvalidArgumentError("feedthrough_timeout must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    control_rate: float = 100.0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    outer: OuterKind = OuterKind.GEOMETRIC
    geometric: GeometricGains = field(default_factory=GeometricGains)
    mpc: MpcParams = field(default_factory=MpcParams)
    inner: InnerKind = InnerKind.NONE
    indi: IndiConfig = field(default_factory=IndiConfig)
    bridge: BridgeConfig = field(default_factory=BridgeConfig)

    def __post_init__(self):
        object.__setattr__(self, "outer", OuterKind.parse(self.outer))
        object.__setattr__(self, "inner", InnerKind.parse(self.inner))
        if not 50.0 <= self.control_rate <= 1000.0:
            raise InvalidArgumentError("control_rate must be within [50, 1000] Hz")

    @property
    def period(self) -> float:
        return 1.0 / self.control_rate

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def default_backup_pipeline() -> PipelineConfig:
    """Geometric controller on the feed-through estimator."""
    return PipelineConfig(
        estimator=EstimatorConfig(kind=EstimatorKind.FEEDTHROUGH),
        outer=OuterKind.GEOMETRIC,
        inner=InnerKind.NONE,
    )


@dataclass(frozen=True)
class GuardConfig:
    """Closed axis-aligned box; leaving it switches to ``backup``."""

    box_min: tuple = (-10.0, -10.0, -1.0)
    box_max: tuple = (10.0, 10.0, 10.0)
    enabled: bool = True
    backup: PipelineConfig = field(default_factory=default_backup_pipeline)

    def __post_init__(self):
        object.__setattr__(self, "box_min", _vec3(self.box_min, "box_min"))
        object.__setattr__(self, "box_max", _vec3(self.box_max, "box_max"))
        if not all(lo < hi for lo, hi in zip(self.box_min, self.box_max)):
            raise InvalidArgumentError("guard box_min must be below box_max component-wise")


# ---------------------------------------------------------------------------
# YAML with line information
# ---------------------------------------------------------------------------

class LineMap(dict):
    """Maps dotted key paths (``"pipeline.mpc.N"``) to 1-based source lines."""


def load_yaml(text: str, source: str | None = None) -> tuple[object, LineMap]:
    """Parse YAML text, returning the plain data and a :class:`LineMap`."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", line=line, source=source) from None
    lines = LineMap()
    if node is None:
        return {}, lines
    data = _construct(node, "", lines, source)
    return data, lines


def _construct(node, path, lines, source):
    lines.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = str(_scalar(key_node, source))
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", path=sub, line=key_node.start_mark.line + 1, source=source)
            lines[sub] = key_node.start_mark.line + 1
            out[key] = _construct(value_node, sub, lines, source)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(item, f"{path}[{i}]", lines, source) for i, item in enumerate(node.value)]
    return _scalar(node, source)


def _scalar(node, source):
    try:
        return yaml.SafeLoader(" ").construct_object(node, deep=True)
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc), line=node.start_mark.line + 1, source=source) from None


def _line_of(lines, path):
    while path:
        if path in lines:
            return lines[path]
        path = path.rpartition(".")[0]
    return lines.get("")


_T = typing.TypeVar("_T")


def build_config(cls: type[_T], data, lines: LineMap | None = None, path: str = "", source: str | None = None) -> _T:
    """Recursively build dataclass ``cls`` from a mapping, reporting errors with location."""
    lines = lines or LineMap()
    if data is None:
        data = {}
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}", path=path or None,
                          line=_line_of(lines, path), source=source)
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown key {key!r} (expected one of {sorted(known)})", path=sub,
                              line=_line_of(lines, sub), source=source)
        hint = hints.get(key)
        if isinstance(hint, type) and dataclasses.is_dataclass(hint):
            kwargs[key] = build_config(hint, value, lines, sub, source)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        bad = _guess_key(str(exc), kwargs)
        sub = (f"{path}.{bad}" if path else bad) if bad else path
        raise ConfigError(str(exc), path=sub or None, line=_line_of(lines, sub), source=source) from None


def _guess_key(message, kwargs):
    for key in sorted(kwargs, key=len, reverse=True):
        if key in message:
            return key
    return None
