"""Modular quadrotor flight stack: pipeline, simulator and experiment harness."""

from .core import (
    GRAVITY,
    Allocation,
    Command,
    CommandMode,
    QuadrotorModel,
    QuadState,
    Setpoint,
    Wrench,
    allocate,
    allocate_inverse,
    quaternion_integrate,
)

__version__ = "0.1.0"

__all__ = [
    "GRAVITY",
    "Allocation",
    "Command",
    "CommandMode",
    "QuadState",
    "QuadrotorModel",
    "Setpoint",
    "Wrench",
    "allocate",
    "allocate_inverse",
    "quaternion_integrate",
]
