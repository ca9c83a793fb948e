import math

import numpy as np
import pytest

from hilbertgeom.convex_body import ConvexBody
from hilbertgeom.finsler_calculus import (Norm2D, coarea_check, distance_field, finsler_gradient,
                                          hypersurface_measure, is_normal, level_curves, normal_line,
                                          sphere_area_derivative, zeta, zeta_bounds)
from hilbertgeom.hilbert_metric import dual_norm
from hilbertgeom.measure import metric_ball

from conftest import random_interior

E = Norm2D.euclidean()
HEX = Norm2D.hexagonal()


def _dirs(n=37, offset=0.1):
    th = offset + 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], 1)


def test_is_normal_examples():
    assert is_normal(E, (1, 0), (0, 1))
    assert not is_normal(E, (1, 0), (1, 1))
    v0, v1 = HEX.vertices[0], HEX.vertices[1]
    assert is_normal(HEX, v0, v1 - v0)


def test_normal_line_examples(disk):
    assert np.allclose(normal_line(E, (1, 0)).direction, (0, 1))
    K = Norm2D.hilbert(disk, (0.5, 0))
    assert np.allclose(normal_line(K, (1, 0)).direction, (0, 1), atol=1e-12)
    v0, v1 = HEX.vertices[0], HEX.vertices[1]
    nl = normal_line(HEX, 0.5 * (v0 + v1))
    w = (v1 - v0) / np.hypot(*(v1 - v0))
    assert abs(abs(nl.direction @ w) - 1) < 1e-12 and not nl.fan
    assert normal_line(HEX, v0).fan


@pytest.mark.parametrize("F", [E, HEX], ids=["euclidean", "hexagonal"])
def test_normal_line_is_normal(F):
    for y in _dirs():
        assert is_normal(F, y, normal_line(F, y).direction, tol=1e-9)


def test_zeta_euclidean_and_scaling(triangle, rounded_pentagon):
    for y in _dirs():
        assert zeta(E, y) == pytest.approx(1.0, abs=1e-6)
    norms = [HEX, Norm2D.hilbert(triangle, (0.2, 0.3)), Norm2D.hilbert(rounded_pentagon, (0.1, -0.2)),
             Norm2D.from_metric([[2.0, 0.3], [0.3, 0.5]])]
    for F in norms:
        for y in _dirs(11):
            z = zeta(F, y)
            for lam in (0.5, 2.0, 10.0):
                assert zeta(F, lam * y) == pytest.approx(z, rel=1e-9)


def test_zeta_hexagon():
    # the triangle tangent norm is hexagonal: zeta is pi/3 in every direction (area of the
    # unit hexagon 3 sqrt3/2, hence pi |y x b2| / (F(y) F(b2) area) = pi/3)
    for y in _dirs():
        assert zeta(HEX, y) == pytest.approx(math.pi / 3, rel=1e-12)
    lo, hi = zeta_bounds(2)
    assert (lo, hi) == pytest.approx((math.pi / 8, 2 * math.pi))


@pytest.mark.parametrize("name", ["disk", "triangle", "square", "rounded_pentagon"])
def test_zeta_bounds_hilbert_norms(name, request, rng):
    body = request.getfixturevalue(name)
    lo, hi = zeta_bounds(2)
    for p in random_interior(body, 5, rng, 1e-3):
        F = Norm2D.hilbert(body, p)
        for y in _dirs(24):
            assert lo <= zeta(F, y) <= hi


def test_hypersurface_disk_circle(disk):
    t = 1.0
    ball = metric_ball(disk, (0, 0), t, n_dir=2048)
    hm = hypersurface_measure(disk, ball)
    assert hm.total == pytest.approx(2 * math.pi * math.sinh(t), rel=1e-6)
    assert np.allclose(hm.density, 1.0, atol=1e-9)
    zero = hypersurface_measure(disk, ball, density=lambda x: np.zeros(len(x)))
    assert zero.total == 0.0


def test_hypersurface_triangle_ratios(triangle, rng):
    lo, hi = zeta_bounds(2)
    curve = np.array([[0.1, 0.1], [0.6, 0.15], [0.2, 0.5]])
    hm = hypersurface_measure(triangle, curve, closed=True)
    assert np.all((hm.density >= lo) & (hm.density <= hi))
    assert np.allclose(hm.density, math.pi / 3, rtol=1e-9)
    ball = metric_ball(triangle, triangle.centroid, 3.0)
    assert hypersurface_measure(triangle, ball).total == pytest.approx(2 * math.pi * 3, rel=1e-9)


def test_finsler_gradient(disk, triangle, rng):
    assert np.allclose(finsler_gradient(E, (1, 0)), (1, 0))
    assert np.all(finsler_gradient(HEX, (0, 0)) == 0)
    K = Norm2D.hilbert(disk, (0.5, 0))
    X = finsler_gradient(K, (1, 0))
    assert float(K(X)) == pytest.approx(0.75, rel=1e-12)
    assert X[0] == pytest.approx(0.5625, rel=1e-12)
    bodies = [(disk, 1e-9), (triangle, 1e-9), (ConvexBody.rounded_polygon([(0, 0), (2, 0), (1, 2)], 0.2), 1e-6)]
    for body, tol in bodies:
        for p in random_interior(body, 4, rng):
            F = Norm2D.hilbert(body, p)
            for df in rng.normal(size=(4, 2)):
                X = finsler_gradient(F, df)
                ds = dual_norm(body, p, df)
                assert df @ X == pytest.approx(ds**2, rel=max(tol, 1e-6))


@pytest.mark.parametrize("name", ["disk", "triangle"])
def test_gradient_normal_to_levels(name, request):
    # the gradient of a distance function is normal to the tangent of its level curves
    body = request.getfixturevalue(name)
    x = body.centroid
    f = distance_field(body, x)
    (curve,) = level_curves(body, f, 1.0, body.diameter / 200)
    h = 1e-6
    for k in range(0, len(curve) - 1, max(1, len(curve) // 12)):
        m = curve[k]
        t = curve[k + 1] - curve[k]
        df = np.array([(f(m + [h, 0]) - f(m - [h, 0]))[0], (f(m + [0, h]) - f(m - [0, h]))[0]]) / (2 * h)
        F = Norm2D.hilbert(body, m)
        # tolerance scaled for the finite-difference and contour errors
        assert is_normal(F, finsler_gradient(F, df), t, tol=1e-3 * float(F(finsler_gradient(F, df))))


def test_coarea_disk():
    disk = ConvexBody.disk()
    f = distance_field(disk, (0, 0))
    target = 2 * math.pi * (math.cosh(1) - math.cosh(0.5))
    res = coarea_check(disk, f, None, (0.5, 1.0))
    assert res.rhs == pytest.approx(target, rel=2e-3)
    assert res.rel_gap < 0.02
    zero = coarea_check(disk, f, lambda x: np.zeros(len(x)), (0.5, 1.0), n_levels=5)
    assert zero.lhs == 0 and zero.rhs == 0


def test_coarea_triangle(triangle):
    f = distance_field(triangle, triangle.centroid)
    res = coarea_check(triangle, f, None, (1.0, 2.0))
    assert res.rel_gap < 0.02
    # hexagonal-plane oracle: sphere measure 2 pi t, band integral 3 pi
    assert res.rhs == pytest.approx(3 * math.pi, rel=1e-3)


def test_sphere_area(disk, triangle):
    s = sphere_area_derivative(disk, (0, 0), 1.0)
    assert s.area == pytest.approx(2 * math.pi * math.sinh(1), rel=1e-5)
    assert s.rel_gap < 0.01
    s = sphere_area_derivative(triangle, triangle.centroid, 2.0)
    assert s.rel_gap < 0.03
    s = sphere_area_derivative(disk, (0, 0), 1e-4, eps=1e-6)
    assert s.area < 1e-3 and s.volume_derivative < 1e-3
