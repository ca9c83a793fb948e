import math

import numpy as np
import pytest

from hilbertgeom.hilbert_metric import _fan_from_exits, hilbert_distance
from hilbertgeom.hyperbolicity import (FOUR_POINT, THIN_TRIANGLE, four_point_delta, gromov_product,
                                       polar_sample, quadruple_delta, thin_triangle_delta,
                                       thin_triangle_estimate)


def _toward_corners(body, d):
    g = body.centroid
    E = (body.V - g) / np.hypot(*(body.V - g).T)[:, None]
    return list(_fan_from_exits(body, g, E).points(float(d)).xy[:, 0])


def test_gromov_product(disk):
    x, y, w = np.array([0.5, 0]), np.array([0, 0.5]), np.zeros(2)
    d = hilbert_distance
    assert gromov_product(disk, w, x, y) == pytest.approx(0.5 * (d(disk, x, w) + d(disk, y, w) - d(disk, x, y)))
    assert gromov_product(disk, w, x, x) == pytest.approx(d(disk, x, w))


def test_polar_sample_radii(triangle, disk, rng):
    for body in (triangle, disk):
        P = polar_sample(body, body.centroid, 5.0, 500, rng)
        r = np.array([hilbert_distance(body, body.centroid, p) for p in P.xy[:50]])
        assert r.max() <= 5.0 + 1e-6 and r.min() >= 0


def test_disk_bounded(disk):
    est = four_point_delta(disk, (0, 0), 3.0, 100_000)
    assert est.delta <= 1.0
    assert est.definition == FOUR_POINT and est.method == "four-point" and est.seed == 0


def test_triangle_grows(triangle):
    d4 = four_point_delta(triangle, triangle.centroid, 4.0, 20_000).delta
    d8 = four_point_delta(triangle, triangle.centroid, 8.0, 20_000).delta
    assert d8 >= d4 + 0.5


def test_zero_samples_and_nesting(triangle):
    assert four_point_delta(triangle, triangle.centroid, 4.0, 0).delta == 0.0
    vals = [four_point_delta(triangle, triangle.centroid, 6.0, n, block=64).delta for n in (10, 100, 1000, 5000)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    a = four_point_delta(triangle, triangle.centroid, 6.0, 3000, seed=7)
    b = four_point_delta(triangle, triangle.centroid, 6.0, 3000, seed=7)
    assert a.delta == b.delta


def test_repeated_point(square, rng):
    P = polar_sample(square, (0, 0), 3.0, 200, rng)
    Q = polar_sample(square, (0, 0), 3.0, 200, rng)
    R = polar_sample(square, (0, 0), 3.0, 200, rng)
    assert np.all(quadruple_delta(square, [P, Q, R, P]) <= 1e-12)


def test_thin_triangle_examples(disk, triangle):
    assert thin_triangle_delta(disk, (0, 0), (0.5, 0), (0.25, 0)) < 1e-3
    pts = [0.99 * np.array([math.cos(a), math.sin(a)]) for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)]
    est = thin_triangle_estimate(disk, *pts)
    assert est.delta <= 1.2 and est.definition == THIN_TRIANGLE and est.method == "thin-triangle"
    v2 = thin_triangle_estimate(triangle, *_toward_corners(triangle, 2.0)).delta
    v4 = thin_triangle_estimate(triangle, *_toward_corners(triangle, 4.0)).delta
    assert v4 >= v2 + 0.3
