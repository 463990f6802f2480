import pytest

from ksblowup.grids import make_grid


@pytest.fixture(scope="session")
def grid5():
    return make_grid(5, 30.0, 3000)


@pytest.fixture(scope="session")
def grid3():
    return make_grid(3, 30.0, 3000)
