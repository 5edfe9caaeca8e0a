import numpy as np
import pytest

from gibbstorus.dynamics import get_map
from gibbstorus.potentials import srb_potential, zero


@pytest.fixture(scope="session")
def cat():
    return get_map("cat")


@pytest.fixture(scope="session")
def doubling():
    return get_map("doubling")


@pytest.fixture(scope="session")
def doubling_srb(doubling):
    return srb_potential(doubling)


@pytest.fixture(scope="session")
def zero_pot():
    return zero()


def cos_mode(*k):
    k = np.asarray(k, float)
    return lambda x: np.cos(2 * np.pi * (np.asarray(x) @ k))
