import numpy as np
import pytest

from mmlsro.geometry import GeometryConfig
from mmlsro.point_cloud import build_cloud, estimate_fill_distance, sample_manifold
from mmlsro.weights import WeightSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def plane_cloud(n=500, d=2, D=5, seed=0, values=None):
    """Uniform samples of a random affine d-plane in R^D.

    Returns ``(cloud, origin, U)`` with ``U`` an orthonormal basis of the plane.
    """
    rng = np.random.default_rng(seed)
    U = np.linalg.qr(rng.standard_normal((D, d)))[0]
    origin = rng.standard_normal(D)
    x = rng.uniform(-1.0, 1.0, size=(n, d))
    pts = origin + x @ U.T
    vals = None if values is None else values(pts)
    return build_cloud(pts, vals, d), origin, U


def geometry(cloud, degree, k=1.5, h=None):
    h = h if h is not None else estimate_fill_distance(cloud).h_est
    return GeometryConfig(degree=degree, weight=WeightSpec(h=h, k=k))


@pytest.fixture(scope="session")
def plane():
    return plane_cloud()


@pytest.fixture(scope="session")
def sphere10k():
    return sample_manifold("sphere", (3,), 10000, 7)
