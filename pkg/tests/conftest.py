import numpy as np
import pytest

from hilbertgeom.convex_body import ConvexBody, signed_boundary_distance

TRIANGLE = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
SQUARE = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
PENTAGON = [(np.cos(t), np.sin(t)) for t in np.pi / 2 + 2 * np.pi * np.arange(5) / 5]


@pytest.fixture
def disk():
    return ConvexBody.disk()


@pytest.fixture
def triangle():
    return ConvexBody.polygon(TRIANGLE)


@pytest.fixture
def square():
    return ConvexBody.polygon(SQUARE)


@pytest.fixture
def rounded_pentagon():
    return ConvexBody.rounded_polygon(PENTAGON, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_interior(body, n, rng, margin=0.05):
    """Rejection sample n points at Euclidean distance > margin from the boundary."""
    lo, hi = body.bbox
    out = []
    while len(out) < n:
        p = rng.uniform(lo, hi, (4 * n, 2))
        out.extend(p[signed_boundary_distance(body, p) < -margin])
    return np.array(out[:n])
