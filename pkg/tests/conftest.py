import pytest

from adaband.wavelets import build_basis


@pytest.fixture(scope="session")
def d4():
    return build_basis(2, 14)


@pytest.fixture(scope="session")
def d8():
    return build_basis(4, 10)
