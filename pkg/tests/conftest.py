import numpy as np
import pytest

from toriclab.basis import enumerate_sector
from toriclab.lattice import build_lattice


@pytest.fixture(scope="session")
def lat2():
    return build_lattice(2)


@pytest.fixture(scope="session")
def lat3():
    return build_lattice(3)


@pytest.fixture(scope="session")
def lat4():
    return build_lattice(4)


@pytest.fixture(scope="session")
def sector2(lat2):
    return enumerate_sector(lat2, "winding00")


@pytest.fixture(scope="session")
def full2(lat2):
    return enumerate_sector(lat2, "full")


@pytest.fixture(scope="session")
def sector3(lat3):
    return enumerate_sector(lat3, "winding00")


@pytest.fixture(scope="session")
def full3(lat3):
    return enumerate_sector(lat3, "full")


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def random_state(rng, dim, complex_=False):
    v = rng.standard_normal(dim)
    if complex_:
        v = v + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)
