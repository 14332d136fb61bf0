import numpy as np
import pytest
from pytest_factoryboy import register

from tests.factories import TrainConfigFactory

# provides the ``train_config`` fixture
register(TrainConfigFactory)


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)
