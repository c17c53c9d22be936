from .delay import DelayLine, delay_pop, delay_push
from .imu import ImuSample, ImuSimulator
from .models import (
    DEFAULT_LOWLEVEL_GAINS,
    BodyWrench,
    IntegratorKind,
    QuadraticAero,
    RotorAeroModel,
    aero_quadratic,
    lowlevel_sim,
    motor_step,
    rigid_body_step,
)
from .sim import STATE_LOG_COLUMNS, SimState, Simulator, sim_step

__all__ = [
    "DEFAULT_LOWLEVEL_GAINS",
    "BodyWrench",
    "DelayLine",
    "ImuSample",
    "ImuSimulator",
    "IntegratorKind",
    "QuadraticAero",
    "RotorAeroModel",
    "STATE_LOG_COLUMNS",
    "SimState",
    "Simulator",
    "aero_quadratic",
    "delay_pop",
    "delay_push",
    "lowlevel_sim",
    "motor_step",
    "rigid_body_step",
    "sim_step",
]
