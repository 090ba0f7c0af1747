import numpy as np
import pytest

from cmelab.data import Dataset
from cmelab.dgp import get_dgp, sample
from cmelab.numerics import rng_stream


@pytest.fixture(scope="session")
def key_data() -> Dataset:
    return sample(get_dgp("key_a1"), 5000, seed=11)


@pytest.fixture(scope="session")
def small_key_data() -> Dataset:
    return sample(get_dgp("key_a1"), 600, seed=5)


@pytest.fixture(scope="session")
def homogeneous_data() -> Dataset:
    """
    Y = 2D + e with X independent of D.
    """
    rng = rng_stream(21, 0)
    n = 3000
    x = rng.standard_normal(n)
    d = rng.standard_normal(n)
    y = 2 * d + rng.standard_normal(n)
    return Dataset.from_arrays(y, d, x)
