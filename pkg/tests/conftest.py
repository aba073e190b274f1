import hypothesis
import numpy as np
import pytest

from mgs.nonlinearity import NonlinearityModel
from mgs.radial_ivp import ShootingProblem

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=400, deadline=None)
hypothesis.settings.load_profile("default")

TWO_HUMP_COEFFS = [0.0, -486.0, 729.0, -273.0, 31.0, -1.0]


@pytest.fixture(scope="session")
def two_hump():
    return NonlinearityModel.polynomial(TWO_HUMP_COEFFS)


@pytest.fixture(scope="session")
def two_hump_factored():
    return NonlinearityModel.factored([0.0, 1.0, 3.0, 9.0, 18.0], scale=-1.0)


@pytest.fixture(scope="session")
def cubic():
    return NonlinearityModel.polynomial([0.0, -1.0, 0.0, 1.0])


@pytest.fixture(scope="session")
def problem(two_hump):
    return ShootingProblem(3, 1.0, two_hump)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(acceptance_log.LINES):
            terminalreporter.write_line(acceptance_log.LINES[k])
