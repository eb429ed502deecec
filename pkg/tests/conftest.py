import numpy as np
import pytest
from hypothesis import settings

from corrcox import Dataset, ErrorModel, FitConfig, ParamBox, default_truth

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def truth():
    return default_truth()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data():
    return default_truth().sample_dataset(200, np.random.default_rng(3))


@pytest.fixture(scope="session")
def cfg():
    return FitConfig(param_box=ParamBox([-3.0], [3.0]), lipschitz_L=1.0, tau=1.0)


def make_data(y, delta, w, tau=1.0):
    return Dataset(np.asarray(y, float), np.asarray(delta), np.asarray(w, float), tau)


def no_error(m=1):
    return ErrorModel.none(m)
