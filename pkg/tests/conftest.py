import numpy as np
import pytest

from schiffer_lab.bessel import BC
from schiffer_lab.curve_geometry import FourierCurve, theta_grid
from schiffer_lab.fem import solve_eigs, triangulate

# independent reference values (30-digit mpmath evaluations, frozen)
J01 = 2.404825557695773
J11 = 3.831705970207512
JP11 = 1.841183781340659
J0_AT_J11 = -0.40275939570255297
LAMBDA_DISK_1 = 1.3567775299013788


@pytest.fixture(scope="session")
def theta():
    return theta_grid(256)


@pytest.fixture(scope="session")
def disk_mesh():
    return triangulate(FourierCurve.circle(), 0.05)


@pytest.fixture(scope="session")
def ellipse_mesh():
    return triangulate(FourierCurve.ellipse(1.2, 1 / 1.2), 0.05)


@pytest.fixture(scope="session")
def disk_dirichlet(disk_mesh):
    return solve_eigs(disk_mesh, BC.DIRICHLET, 6)


@pytest.fixture(scope="session")
def disk_neumann(disk_mesh):
    return solve_eigs(disk_mesh, BC.NEUMANN, 8)


@pytest.fixture(scope="session")
def radial_neumann(disk_neumann):
    """The radial Neumann mode with eigenvalue j_{1,1}^2 (index 5 on the disk)."""
    mode = disk_neumann[5]
    assert abs(mode.eigenvalue - J11**2) < 0.01 * J11**2
    return mode


@pytest.fixture(scope="session")
def ellipse_dirichlet(ellipse_mesh):
    return solve_eigs(ellipse_mesh, BC.DIRICHLET, 4)


@pytest.fixture(scope="session")
def ellipse_neumann(ellipse_mesh):
    return solve_eigs(ellipse_mesh, BC.NEUMANN, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
