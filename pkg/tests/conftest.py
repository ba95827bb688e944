"""Shared fixtures and the `slow` marker for the carbospec test suite."""

import numpy as np
import pytest

from src.spectra import REFLECTANCE_PCT, SpectralDataset, WavelengthGrid
from src.synthetic import PlantedSignalConfig, planted_dataset


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-size tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance runs (planted-signal MLP, full CNN overfit)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    # 101 points, 0.5 nm apart
    return WavelengthGrid(1150.0, 1200.0, 0.5)


@pytest.fixture
def reflectance_dataset(rng):
    matrix = rng.uniform(5.0, 95.0, size=(6, 2701))
    labels = np.array([0.0, 1.5, 3.0, 7.25, 12.0, 30.0])
    return SpectralDataset(matrix, labels, tuple(f"R{i}" for i in range(6)), REFLECTANCE_PCT)


@pytest.fixture
def planted_small():
    return planted_dataset(PlantedSignalConfig(n_samples=80, seed=7))


@pytest.fixture
def absorbance_dataset(planted_small):
    return planted_small.subset(range(12))


@pytest.fixture
def canonical_csv(tmp_path, absorbance_dataset):
    from src.ingest import write_canonical

    path = tmp_path / "canonical.csv"
    write_canonical(absorbance_dataset, path)
    return path
