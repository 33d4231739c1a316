"""Pytest configuration and fixtures."""
import numpy as np
import pytest

from multical.config import Config
from multical.schemas.models import (
    DiscrepancyMode,
    DiscrepancyModel,
    KernelFamily,
    KernelSpec,
    MultiSourceDataset,
    ParameterState,
    SourceObservations,
)
from multical.storage.memory_storage import MemoryStorage


def pytest_collection_modifyitems(config, items):
    """Skip tests marked slow unless RUN_SLOW_TESTS=true."""
    if Config.RUN_SLOW_TESTS:
        return
    skip = pytest.mark.skip(reason="slow; set RUN_SLOW_TESTS=true to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def storage():
    """In-memory storage for tests."""
    return MemoryStorage()


@pytest.fixture
def design():
    """Ten well-separated points in [0, 1]."""
    return (np.arange(10) + 0.5)[:, None] / 10.0


@pytest.fixture
def aligned_dataset(design, rng):
    """Three sources observed at the same inputs."""
    f = np.sin(np.pi / 2 * design[:, 0])
    sources = [
        SourceObservations(
            inputs=design.copy(), outputs=f + rng.normal(0.0, 0.3, design.shape[0]), label=f"s{l}"
        )
        for l in range(3)
    ]
    return MultiSourceDataset(sources=sources)


@pytest.fixture
def model_output(design):
    """Forward model output at the fixture design."""
    return np.sin(np.pi / 2 * design[:, 0])


@pytest.fixture
def state():
    """Parameter state matching ``aligned_dataset``."""
    return ParameterState(
        theta=[np.pi / 2],
        mu=[0.1, -0.2, 0.05],
        sigma2=[0.5, 0.3, 0.8],
        beta_bias=[[6.0], [4.0], [8.0]],
        eta=[0.2, 0.1, 0.3],
        tau2=0.7,
        beta_disc=[5.0],
    )


@pytest.fixture
def gasp():
    """GaSP discrepancy on one input."""
    return DiscrepancyModel(
        mode=DiscrepancyMode.GASP,
        kernel=KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0]),
    )


@pytest.fixture
def sgasp():
    """S-GaSP discrepancy on one input."""
    return DiscrepancyModel(
        mode=DiscrepancyMode.SGASP,
        lambda_z=30.0,
        kernel=KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[1.0]),
    )
