import numpy as np
import pytest

from twomode import BathParams, SystemParams


@pytest.fixture(scope="session")
def fig5_system():
    return SystemParams.from_detuning(1.0, 0.25, 0.25)


@pytest.fixture(scope="session")
def fig5_baths():
    return {eta: BathParams(eta, 1.0, 5.0, 1.0) for eta in (0.05, 0.2, 0.3)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
