
import numpy as np
import pytest

from hilbertgeom.hilbert_metric import distance_from_slacks, distances, point_batch
from hilbertgeom.measure import make_region, metric_ball
from hilbertgeom.spectrum import (Mesh, MeshError, annulus_mesh, annulus_test_function,
                                  lambda1_exhaustion, minimize_rayleigh, polar_mesh, rayleigh_quotient,
                                  refine_mesh, richardson, riemannian_eig, sandwich_stability, triangulate)


def _square_region(body, s=0.5):
    return make_region(body, [(-s, -s), (s, -s), (s, s), (-s, s)])


def _conforming(mesh):
    T = mesh.triangles
    E = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    _, count = np.unique(E, axis=0, return_counts=True)
    return np.all(count <= 2)


def _signed_areas(mesh):
    P = mesh.vertices[mesh.triangles]
    a, b = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def test_triangulate_square(square):
    region = _square_region(square)
    m = triangulate(square, region, 0.25)
    assert len(m.triangles) >= 32
    assert m.h <= 0.25 * (1 + 1e-9)
    assert np.degrees(m.angles().min()) >= 20 - 1e-6
    assert np.all(_signed_areas(m) > 0) and _conforming(m)
    assert np.all(np.abs(m.vertices[m.boundary]).max(1) > 0.5 - 1e-12)
    fine = triangulate(square, region, 0.125)
    assert len(fine.triangles) > 2 * len(m.triangles)
    with pytest.raises(MeshError):
        triangulate(square, region, 5.0)


def test_refine_mesh(square):
    m = triangulate(square, _square_region(square), 0.25)
    r = refine_mesh(m)
    assert len(r.triangles) == 4 * len(m.triangles)
    assert np.all(_signed_areas(r) > 0) and _conforming(r)
    assert np.allclose(_signed_areas(r).sum(), 1.0)
    assert r.boundary.sum() == 2 * m.boundary.sum()
    assert np.allclose(r.slack, point_batch(square, r.vertices).slack, atol=1e-15)


def test_polar_mesh_valid(triangle):
    m = polar_mesh(triangle, triangle.centroid, np.arange(0.5, 6.01, 0.5), n_dir=64, depth=6)
    assert np.all(_signed_areas(m) > 0) and _conforming(m)
    d = distances(triangle, np.broadcast_to(triangle.centroid, (int(m.boundary.sum()), 2)), m.vertices[m.boundary])
    assert np.allclose(d, 6.0, atol=1e-9)


def test_quotient_scale_and_sign(disk, rng):
    m = triangulate(disk, _square_region(disk), 0.1)
    f = rng.normal(size=len(m.vertices))
    f[m.boundary] = 0
    q = rayleigh_quotient(disk, m, f)
    assert rayleigh_quotient(disk, m, 2 * f) == pytest.approx(q, rel=1e-12)
    assert rayleigh_quotient(disk, m, -3 * f) == pytest.approx(q, rel=1e-12)
    assert rayleigh_quotient(disk, m, np.abs(f)) <= q + 1e-12
    with pytest.raises(ValueError):
        rayleigh_quotient(disk, m, np.zeros(len(m.vertices)))


def test_single_interior_vertex(disk):
    V = np.array([[0, 0], [0.3, 0], [0, 0.3], [-0.3, 0], [0, -0.3]], float)
    T = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]])
    m = Mesh(V, T, np.array([False, True, True, True, True]))
    est = minimize_rayleigh(disk, m, restarts=2)
    hat = np.array([1.0, 0, 0, 0, 0])
    assert est.lambda_ == pytest.approx(rayleigh_quotient(disk, m, hat), rel=1e-12)


def test_minimizer_matches_quadratic_solve(disk):
    m = triangulate(disk, metric_ball(disk, (0, 0), 1.5, n_dir=64), 0.1)
    est = minimize_rayleigh(disk, m, restarts=2)
    assert est.converged
    assert est.lambda_ == pytest.approx(riemannian_eig(disk, m), rel=1e-6)
    assert est.lambda_ == pytest.approx(rayleigh_quotient(disk, m, est.minimizer), rel=1e-10)
    assert np.all(est.minimizer.values >= -1e-9 * np.abs(est.minimizer.values).max())


def test_disk_ball_radius_3(disk):
    # Dirichlet value on B_3(0); a converged radial finite-difference solve gives 0.95396,
    # the PL estimate at h = 0.05 is an upper bound a few percent above it
    m = triangulate(disk, metric_ball(disk, (0, 0), 3.0), 0.05)
    lam = riemannian_eig(disk, m)
    assert 0.95396 <= lam <= 0.95396 * 1.15
    assert lam > 0.25


def test_refinement_non_increasing(triangle):
    region = make_region(triangle, [(0.1, 0.1), (0.7, 0.15), (0.15, 0.7)])
    m = triangulate(triangle, region, 0.12)
    a = minimize_rayleigh(triangle, m, restarts=2).lambda_
    b = minimize_rayleigh(triangle, refine_mesh(m), restarts=2).lambda_
    assert b <= a * (1 + 1e-6)


def test_domain_monotonicity(square):
    m = triangulate(square, _square_region(square, 0.6), 0.1)
    big = minimize_rayleigh(square, m, restarts=2).lambda_
    # zeroing the vertices outside a smaller square gives a subspace: Dirichlet data on a subdomain
    bd = m.boundary | (np.abs(m.vertices).max(1) > 0.35)
    small = minimize_rayleigh(square, Mesh(m.vertices, m.triangles, bd, m.slack), restarts=2).lambda_
    assert small >= big - 1e-8


def test_exhaustion_triangle(triangle):
    ex = lambda1_exhaustion(triangle, [0.5, 0.7], h=0.1, restarts=2)
    assert ex.non_increasing
    assert ex.values[1] < ex.values[0]
    one = lambda1_exhaustion(triangle, [0.5], h=0.1, restarts=2)
    assert one.values[0] == ex.values[0] and one.extrapolated is None
    with pytest.raises(ValueError):
        lambda1_exhaustion(triangle, [0.7, 0.5])


def test_richardson_linear():
    assert richardson([0.5, 0.75], [2.0, 1.5]) == pytest.approx(1.0)


def test_annulus_function(triangle, disk):
    c = triangle.centroid
    m = annulus_mesh(triangle, c, 3.0, n_dir=48)
    f = annulus_test_function(triangle, c, 3.0, m)
    # exact slacks: xy coordinates do not resolve distances next to the corners
    d = distance_from_slacks(point_batch(triangle, c[None]).slack[0], m.slack)
    assert np.all(f.values[d <= 3.0 - 1e-9] == 1.0)
    assert np.all(f.values[d >= 4.0 + 1e-9] == 0.0)
    assert np.all(f.values[m.boundary] == 0.0)
    with pytest.raises(MeshError):
        annulus_test_function(triangle, c, 3.5, m)
    for R in (2.0, 4.0, 6.0):
        md = annulus_mesh(disk, (0, 0), R, n_dir=64)
        q = rayleigh_quotient(disk, md, annulus_test_function(disk, (0, 0), R, md))
        assert q >= 0.1


def test_sandwich_square(square):
    region = _square_region(square, 0.3)
    r02 = sandwich_stability(square, region, 0.2, h=0.15, restarts=1)
    r005 = sandwich_stability(square, region, 0.05, h=0.15, restarts=1)
    assert set(r02.lambdas) == {"inner", "body", "outer", "smoothed"}
    assert r005.spread < r02.spread
    # the smoothed body lies between the homothets, so its estimate lies in their band
    lo = min(r005.lambdas["inner"], r005.lambdas["outer"])
    hi = max(r005.lambdas["inner"], r005.lambdas["outer"])
    assert lo <= r005.lambdas["smoothed"] <= hi
