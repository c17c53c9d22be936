import numpy as np
import pytest

from quadstack.core import QuadrotorModel


@pytest.fixture(scope="session", autouse=True)
def warm_numba_kernels():
    """Load the cached numba kernels once so timing checks measure steady-state cost."""
    from quadstack.harness import ExperimentConfig, TrajectorySpec, run_experiment
    from quadstack.pipeline import InnerKind, OuterKind, PipelineConfig

    hover = TrajectorySpec(kind="hover")
    run_experiment(ExperimentConfig(trajectory=hover, duration=0.05), write=False)
    run_experiment(
        ExperimentConfig(trajectory=hover, duration=0.05,
                         pipeline=PipelineConfig(outer=OuterKind.MPC, inner=InnerKind.INDI)),
        write=False,
    )
    yield


@pytest.fixture
def model():
    return QuadrotorModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
