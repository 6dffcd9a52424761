import numpy as np
import pytest

from cr_henkin.geometry import d_alpha, unit_ball
from cr_henkin.grids import build_boundary_grid, build_volume_grid


@pytest.fixture(scope="session")
def ball():
    return unit_ball()


@pytest.fixture(scope="session")
def dalpha():
    return d_alpha(0.5)


@pytest.fixture(scope="session")
def ball_grid8(ball):
    return build_boundary_grid(ball, resolution=8)


@pytest.fixture(scope="session")
def ball_vgrid8(ball):
    return build_volume_grid(ball, resolution=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
