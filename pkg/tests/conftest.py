import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from foascene.demo_pool import make_demo_pool
from foascene.rir import sample_room
from foascene.synth import SourcePool, SynthConfig, build_room_bank

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def pool_path(tmp_path_factory):
    return make_demo_pool(tmp_path_factory.mktemp("pool"))


@pytest.fixture(scope="session")
def pool(pool_path):
    return SourcePool.load(pool_path)


@pytest.fixture(scope="session")
def reverberant_banks():
    """Two moderately damped rooms; cheap to simulate."""
    return [build_room_bank(sample_room(seed, absorption_range=(0.35, 0.5))) for seed in (11, 12)]


@pytest.fixture(scope="session")
def anechoic_banks():
    return [build_room_bank(sample_room(seed, absorption_range=(1.0, 1.0))) for seed in (21, 22)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synth_config():
    return SynthConfig()
