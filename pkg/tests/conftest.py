import numpy as np
import pytest

from forchpi.grid import build_radial
from forchpi.kernel import GPolynomial, Kernel, two_term


@pytest.fixture(scope="session")
def radial64():
    return build_radial(1.0, 2.0, 64)


@pytest.fixture(scope="session")
def darcy():
    return Kernel(two_term(1.0, 0.0))


@pytest.fixture(scope="session")
def forch():
    return Kernel(two_term(1.0, 1.0))


@pytest.fixture(scope="session")
def high_degree():
    return Kernel(GPolynomial((1.0, 1.0), (0.0, 6.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
