from .flatness import (
    FlatOutput,
    attitude_from_thrust_and_yaw,
    flatness_setpoint,
    flatness_state,
    required_wrench,
    thrust_limit_violation,
)
from .generators import SAMPLE_RATE, generate_circle, generate_lemniscate
from .io import HEADER, trajectory_load, trajectory_save
from .types import (
    TRAJECTORY_COLUMNS,
    HoverReference,
    PolynomialReference,
    Reference,
    SampledTrajectory,
    VelocityReference,
    polynomial_derivatives,
    sample_polynomial,
)

__all__ = [
    "FlatOutput",
    "HEADER",
    "HoverReference",
    "PolynomialReference",
    "Reference",
    "SAMPLE_RATE",
    "SampledTrajectory",
    "TRAJECTORY_COLUMNS",
    "VelocityReference",
    "attitude_from_thrust_and_yaw",
    "flatness_setpoint",
    "flatness_state",
    "generate_circle",
    "generate_lemniscate",
    "polynomial_derivatives",
    "required_wrench",
    "sample_polynomial",
    "thrust_limit_violation",
    "trajectory_load",
    "trajectory_save",
]
