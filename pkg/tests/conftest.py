import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_symmetric(n, d, seed=0):
    from spiked_deflation.symtensor import symmetrize

    return symmetrize(np.random.default_rng(seed).standard_normal((n,) * d))
