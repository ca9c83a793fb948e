import math

import numpy as np
import pytest

from hilbertgeom.convex_body import NotInteriorError, affine_image, homothety, smooth_polygon
from hilbertgeom.hilbert_metric import (breakpoint_directions, distances, dual_norm, finsler_norm, hilbert_distance, norms,
                                        tangent_unit_ball)

from conftest import random_interior

BODIES = ["disk", "triangle", "square", "rounded_pentagon"]


def test_disk_examples(disk):
    assert hilbert_distance(disk, (0, 0), (0.5, 0)) == pytest.approx(0.5 * math.log(3), abs=1e-14)
    for r in np.arange(1, 10) / 10:
        assert hilbert_distance(disk, (0, 0), (r, 0)) == pytest.approx(math.atanh(r), abs=1e-13)
    assert finsler_norm(disk, (0, 0), (1, 0)) == pytest.approx(1.0)
    assert finsler_norm(disk, (0.5, 0), (1, 0)) == pytest.approx(4 / 3)
    assert dual_norm(disk, (0, 0), (1, 0)) == pytest.approx(1.0, abs=1e-12)
    assert dual_norm(disk, (0.5, 0), (1, 0)) == pytest.approx(0.75, abs=1e-10)


@pytest.mark.parametrize("name", BODIES)
def test_trivial_cases(name, request):
    body = request.getfixturevalue(name)
    p = body.centroid
    assert hilbert_distance(body, p, p) == 0.0
    assert finsler_norm(body, p, (0, 0)) == 0.0
    assert dual_norm(body, p, (0, 0)) == 0.0


def test_not_interior(triangle):
    with pytest.raises(NotInteriorError):
        hilbert_distance(triangle, (0.2, 0.2), (1.0, 1.0))
    with pytest.raises(NotInteriorError):
        finsler_norm(triangle, (0.0, 0.0), (1.0, 0.0))


def test_klein_model_pairs(disk, rng):
    # cross-ratio closed form: cosh d = 2 (1 - p.q) / sqrt((1-|p|^2)(1-|q|^2)) - 1 style identity
    P = random_interior(disk, 500, rng, 1e-3)
    Q = random_interior(disk, 500, rng, 1e-3)
    pp, qq, pq = (P * P).sum(1), (Q * Q).sum(1), (P * Q).sum(1)
    ref = 0.5 * np.arccosh(2 * (1 - pq) ** 2 / ((1 - pp) * (1 - qq)) - 1)
    assert np.allclose(distances(disk, P, Q), ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", BODIES)
def test_metric_axioms(name, request, rng):
    body = request.getfixturevalue(name)
    X, Y, Z = (random_interior(body, 1000, rng, 1e-4) for _ in range(3))
    dxy, dyx = distances(body, X, Y), distances(body, Y, X)
    assert np.allclose(dxy, dyx, rtol=0, atol=1e-12 * max(1, dxy.max()))
    slack = distances(body, X, Z) + distances(body, Z, Y) - dxy
    assert slack.min() >= -1e-10
    lam = rng.uniform(0, 1, (1000, 1))
    M = (1 - lam) * X + lam * Y
    gap = distances(body, X, M) + distances(body, M, Y) - dxy
    assert np.abs(gap).max() <= 1e-10 * np.maximum(1, dxy).max()


@pytest.mark.parametrize("name", ["disk", "triangle", "square"])
def test_affine_invariance(name, request, rng):
    body = request.getfixturevalue(name)
    A = np.array([[1.7, 0.4], [-0.3, 0.8]])
    b = np.array([0.3, -2.0])
    img = affine_image(body, A, b)
    X, Y = random_interior(body, 300, rng, 1e-3), random_interior(body, 300, rng, 1e-3)
    assert np.allclose(distances(img, X @ A.T + b, Y @ A.T + b), distances(body, X, Y), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", BODIES)
def test_norm_homogeneous_symmetric(name, request, rng):
    body = request.getfixturevalue(name)
    p = random_interior(body, 1, rng)[0]
    u = rng.normal(size=(50, 2))
    P = np.broadcast_to(p, u.shape)
    F = norms(body, P, u)
    assert np.allclose(norms(body, P, -2.5 * u), 2.5 * F, rtol=1e-12)
    tb = tangent_unit_ball(body, p, 64)
    assert np.allclose(norms(body, np.broadcast_to(p, tb.vertices.shape), tb.vertices), 1.0, atol=1e-9)
    assert np.allclose(tb.vertices[:32], -tb.vertices[32:], atol=1e-9)


def test_disk_tangent_balls(disk):
    tb = tangent_unit_ball(disk, (0, 0), 64)
    assert np.allclose(np.hypot(*tb.vertices.T), 1.0)
    tb = tangent_unit_ball(disk, (0.5, 0), 256)
    x, y = tb.vertices.T
    assert np.allclose((x / 0.75) ** 2 + (y / math.sqrt(0.75)) ** 2, 1.0)


def test_triangle_tangent_ball_hexagon(triangle, rng):
    # the norm is the maximum of the six functionals (n_j/s_j - n_i/s_i)/2, i != j
    for p in random_interior(triangle, 5, rng):
        s = triangle.offsets - triangle.normals @ p
        G = triangle.normals / s[:, None]
        L = np.array([0.5 * (G[i] - G[j]) for i in range(3) for j in range(3) if i != j])
        th = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
        E = np.stack([np.cos(th), np.sin(th)], 1)
        assert np.allclose(norms(triangle, np.broadcast_to(p, E.shape), E), (E @ L.T).max(1), rtol=1e-12)
        # each functional is active on an arc: six flat sides
        assert len(np.unique((E @ L.T).argmax(1))) == 6


@pytest.mark.parametrize("name", BODIES)
def test_duality_pairing(name, request, rng):
    body = request.getfixturevalue(name)
    p = random_interior(body, 1, rng)[0]
    th = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    U = np.concatenate([np.stack([np.cos(th), np.sin(th)], 1), breakpoint_directions(body, p)])
    F = norms(body, np.broadcast_to(p, U.shape), U)
    for l in rng.normal(size=(5, 2)):
        ds = dual_norm(body, p, l)
        ratio = (U @ l) / F
        assert ratio.max() <= ds * (1 + 1e-6)
        assert ratio.max() >= ds * (1 - 1e-4)


def test_homothet_sandwich(triangle, rng):
    g = triangle.centroid
    sm = smooth_polygon(triangle, 0.05)
    inner, outer = homothety(triangle, g, 1 - 0.2), homothety(triangle, g, 1 + 0.2)
    assert sm.rho < 0.2
    for p in random_interior(inner, 20, rng, 1e-3):
        for gamma in (triangle, sm.body):
            u = rng.normal(size=2)
            assert finsler_norm(outer, p, u) <= finsler_norm(gamma, p, u) * (1 + 1e-12)
            assert finsler_norm(gamma, p, u) <= finsler_norm(inner, p, u) * (1 + 1e-12)
            l = rng.normal(size=2)
            assert dual_norm(inner, p, l) <= dual_norm(gamma, p, l) * (1 + 1e-9)
            assert dual_norm(gamma, p, l) <= dual_norm(outer, p, l) * (1 + 1e-9)
