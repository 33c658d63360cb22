import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def models():
    from sasaki_lab import model_from_name
    return {name: model_from_name(name) for name in ("heisenberg3", "heisenberg5", "hopf3", "ads3")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
