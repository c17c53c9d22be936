from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    MetricsReport,
    ThrustStepResult,
    TrajectorySpec,
    compute_rmse,
    latency_sweep,
    load_experiment_config,
    parse_experiment_config,
    run_experiment,
    thrust_step_experiment,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "MetricsReport",
    "ThrustStepResult",
    "TrajectorySpec",
    "compute_rmse",
    "latency_sweep",
    "load_experiment_config",
    "parse_experiment_config",
    "run_experiment",
    "thrust_step_experiment",
]
