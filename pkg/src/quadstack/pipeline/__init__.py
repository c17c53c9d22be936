from .bridge import COMMAND_LOG_HEADER, Ack, Bridge, LogBridge, NullBridge, SimBridge, command_log_row
from .config import (
    BridgeConfig,
    BridgeKind,
    EstimatorConfig,
    EstimatorKind,
    GeometricGains,
    GuardConfig,
    IndiConfig,
    InnerKind,
    MpcParams,
    OuterKind,
    PipelineConfig,
    SamplerConfig,
    SamplerKind,
    build_config,
    default_backup_pipeline,
    load_yaml,
)
from .estimators import (
    EkfEstimator,
    EkfNoise,
    EkfState,
    FeedthroughEstimator,
    ekf_propagate,
    ekf_update_pose,
    estimator_feedthrough,
)
from .geometric import control_geometric, tilt_prioritized_error
from .guard import Guard, GuardStatus, guard_check
from .indi import IndiController, LowPass2, control_indi
from .mpc import MpcController, MpcResult, control_mpc
from .pilot import Pilot, PilotEvent, PilotInputs, pilot_step
from .samplers import PositionSampler, TimeSampler, sample_position_based, sample_time_based

__all__ = [
    "COMMAND_LOG_HEADER", "Ack", "Bridge", "BridgeConfig", "BridgeKind", "EkfEstimator", "EkfNoise",
    "EkfState", "EstimatorConfig", "EstimatorKind", "FeedthroughEstimator", "GeometricGains", "Guard",
    "GuardConfig", "GuardStatus", "IndiConfig", "IndiController", "InnerKind", "LogBridge", "LowPass2",
    "MpcController", "MpcParams", "MpcResult", "NullBridge", "OuterKind", "Pilot", "PilotEvent",
    "PilotInputs", "PipelineConfig", "PositionSampler", "SamplerConfig", "SamplerKind", "SimBridge",
    "TimeSampler", "build_config", "command_log_row", "control_geometric", "control_indi", "control_mpc",
    "default_backup_pipeline", "ekf_propagate", "ekf_update_pose", "estimator_feedthrough", "guard_check",
    "load_yaml", "pilot_step", "sample_position_based", "sample_time_based", "tilt_prioritized_error",
]
