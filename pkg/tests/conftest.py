import numpy as np
import pytest

from qlbm._backend import numba_available

BACKENDS = ["numpy"] + (["numba"] if numba_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
