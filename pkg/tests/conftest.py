import numpy as np
import pytest

from pcad.config import ModelConfig, RenderConfig
from pcad.programs import BodyProgram, ObjectProgram


@pytest.fixture(scope="session")
def object_program():
    return ObjectProgram()


@pytest.fixture(scope="session")
def body_program():
    return BodyProgram()


@pytest.fixture(scope="session")
def render_cfg():
    return RenderConfig()


@pytest.fixture(scope="session")
def model_cfg():
    return ModelConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
