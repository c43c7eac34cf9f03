import numpy as np
import pytest

from gcr import autodiff


@pytest.fixture(autouse=True)
def _restore_precision():
    yield
    autodiff.set_precision("f32")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
