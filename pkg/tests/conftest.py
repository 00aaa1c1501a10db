import numpy as np
import pytest

from cmacarm.dynamics import LinkParams, RobotModel
from cmacarm.encoding import BasisLayout

# parameters shared with tests/twolink_symbolic.py
TWOLINK = dict(m1=1.2, l1=1.0, r1=0.5, I1=0.05,
               m2=0.8, l2=0.7, r2=0.35, I2=0.02)


@pytest.fixture(scope="session")
def pendulum():
    """Point-mass pendulum: unit mass at unit distance, D = 1."""
    return RobotModel(links=(LinkParams(1.0, 1.0, 1.0, 0.0),))


@pytest.fixture(scope="session")
def pendulum_friction():
    return RobotModel(links=(LinkParams(1.0, 1.0, 1.0, 0.0, 0.5, 0.3),))


@pytest.fixture(scope="session")
def twolink():
    p = TWOLINK
    return RobotModel(links=(
        LinkParams(p["m1"], p["l1"], p["r1"], p["I1"], 0.4, 0.3),
        LinkParams(p["m2"], p["l2"], p["r2"], p["I2"], 0.25, 0.2)))


@pytest.fixture(scope="session")
def threelink():
    return RobotModel(links=tuple(
        LinkParams(1.0 + 0.2 * i, 0.8, 0.4, 0.03, 0.1, 0.05)
        for i in range(3)))


@pytest.fixture(scope="session")
def small_layout():
    return BasisLayout(ranges=((-np.pi, np.pi),), tilings=6, cells_per_dim=8)


@pytest.fixture(scope="session")
def layout_2d():
    return BasisLayout(ranges=((-np.pi, np.pi), (-np.pi, np.pi)),
                       tilings=8, cells_per_dim=10)


@pytest.fixture(scope="session")
def speed_layout():
    return BasisLayout(ranges=((-3.0, 3.0),), tilings=8, cells_per_dim=25)
