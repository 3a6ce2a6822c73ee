import numpy as np
import pytest

from oulab import models


@pytest.fixture(scope="session")
def dc8():
    return models.make_diagonal_constant(8, -1.0, 1.0)


@pytest.fixture(scope="session")
def dc4():
    return models.make_diagonal_constant(4, -1.0, 1.0)


@pytest.fixture(scope="session")
def rational4():
    return models.make_diagonal_rational(4, 1.0, 2.0)


@pytest.fixture(scope="session")
def rational2():
    return models.make_diagonal_rational(2, 1.0, 2.0)


@pytest.fixture(scope="session")
def scalar4():
    return models.build_model("scalar-osc", {})


@pytest.fixture(scope="session")
def parabolic5():
    return models.build_model("parabolic-1d", {})


@pytest.fixture(scope="session")
def nonunique3():
    return models.make_nonunique_demo(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
