import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from artiplan import strategy
from artiplan.config import derive_seed
from artiplan.robot import default_model
from artiplan.scene import GeneratorConfig, generate_instances

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def arms(model):
    return strategy.sample_arm_pool(model, derive_seed(0, "arm-pool"), 20)[:10]


@pytest.fixture(scope="session")
def small_suite():
    gen = GeneratorConfig(counts={"prismatic": 2, "hinge_left": 1, "hinge_top": 1})
    return generate_instances(5, gen)


@pytest.fixture(scope="session")
def solved(small_suite, arms, model):
    """A prismatic instance with a known successful strategy."""
    inst = small_suite[0]
    cands = strategy.CandidateSet.for_object(inst.obj, arms)
    res = strategy.mpao_plan(inst, cands, strategy.Ranker.random(0), None, model)
    assert res.success
    return inst, cands, res


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
