import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xfund.market import AssetModel, TimeGrid, build_account, calibrate_lattice

settings.register_profile(
    "suite", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def grid20() -> TimeGrid:
    return TimeGrid(0.0, 1.0, 20)


@pytest.fixture
def flat_cash(grid20):
    return build_account(0.03, grid20, label="cash")


@pytest.fixture
def single_lattice(grid20, flat_cash):
    asset = AssetModel(index=0, spot=100.0, sigma=0.2, funding=flat_cash)
    return calibrate_lattice([asset], grid20)


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.PCG64(20260815))
