import numpy as np
import pytest


def const_mat(value, rows=1, cols=1):
    def coeff(x, z):
        out = np.empty(x.shape[:-1] + (rows, cols))
        out[...] = value
        return out
    return coeff


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
