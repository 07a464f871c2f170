import numpy as np
import pytest

from csrtt.ofdm import OfdmConfig


@pytest.fixture
def cfg():
    return OfdmConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)
