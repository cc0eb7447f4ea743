import pytest

from beacsim.identity import Identity


@pytest.fixture(scope="session")
def alice() -> Identity:
    return Identity.from_seed(b"alice")


@pytest.fixture(scope="session")
def bob() -> Identity:
    return Identity.from_seed(b"bob")


@pytest.fixture(scope="session")
def carol() -> Identity:
    return Identity.from_seed(b"carol")
