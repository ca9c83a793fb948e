import math

import numpy as np
import pytest

from hilbertgeom.cheeger import (cheeger_chain_report, cheeger_quotient, cheeger_scan, sobolev_quotient,
                                 tube_function)
from hilbertgeom.measure import metric_ball
from hilbertgeom.spectrum import MeshError, polar_mesh, rayleigh_quotient


def _tube_mesh(body, R, eps, n_dir=512):
    radii = np.concatenate([np.arange(0.05, R, 0.05), R + np.linspace(0, eps, 9), R + eps + np.array([0.05, 0.1])])
    return polar_mesh(body, (0, 0), radii, n_dir)


def test_disk_ball_quotients(disk):
    ball = metric_ball(disk, (0, 0), 2.0, n_dir=2048)
    plain = cheeger_quotient(disk, ball)
    assert plain == pytest.approx(1 / math.tanh(1.0), rel=1e-5)
    assert plain == pytest.approx(1.3130, abs=1e-4)
    assert cheeger_quotient(disk, ball, weighted=True) == pytest.approx(plain, rel=1e-9)


def test_disk_scan(disk):
    rep = cheeger_scan(disk, [(0, 0)], [1, 2, 4, 6])
    q = [c.q_plain for c in rep.candidates]
    assert all(a > b for a, b in zip(q, q[1:]))
    for c in rep.candidates:
        assert c.q_plain == pytest.approx(1 / math.tanh(c.radius / 2), rel=1e-4)
    assert rep.best_quotient_plain == pytest.approx(1.0, rel=0.05)
    assert rep.best_quotient_zeta == pytest.approx(rep.best_quotient_plain, rel=1e-9)


def test_single_candidate_echo(square):
    rep = cheeger_scan(square, [(0.1, 0.2)], [1.5])
    ball = metric_ball(square, (0.1, 0.2), 1.5)
    assert rep.best_quotient_plain == pytest.approx(cheeger_quotient(square, ball), rel=1e-3)
    assert rep.best_quotient_zeta == pytest.approx(cheeger_quotient(square, ball, weighted=True), rel=1e-3)


def test_triangle_decay(triangle):
    Rs = [2.0, 4.0, 8.0, 16.0]
    rep = cheeger_scan(triangle, [triangle.centroid], Rs)
    for c in rep.candidates:
        # hexagonal-plane oracle: 6R / (pi R^2) and 2 pi R / (pi R^2)
        assert c.q_plain == pytest.approx(6 / (math.pi * c.radius), rel=1e-6)
        assert c.q_zeta == pytest.approx(2 / c.radius, rel=1e-6)
    assert rep.best_quotient_zeta <= 2.0 / Rs[-1] * (1 + 1e-6)


def test_skipped_balls(triangle):
    rep = cheeger_scan(triangle, [triangle.centroid], [1.0, 400.0])
    assert len(rep.candidates) == 1 and len(rep.skipped) == 1


def test_tube_functions(disk):
    R = 1.0
    ball = metric_ball(disk, (0, 0), R, n_dir=1024)
    target = cheeger_quotient(disk, ball, weighted=True)
    gaps = []
    for eps in (0.1, 0.05):
        m = _tube_mesh(disk, R, eps)
        f = tube_function(disk, ball, eps, m)
        r = np.hypot(*m.vertices.T)
        assert np.all(f.values[r < math.tanh(R) * 0.999] == 1.0)
        assert np.all(f.values[r > math.tanh(R + eps) * 1.001] == 0.0)
        sq = sobolev_quotient(disk, m, f)
        assert sobolev_quotient(disk, m, 3 * f.values) == pytest.approx(sq, rel=1e-12)
        gaps.append(abs(sq / target - 1))
    assert gaps[1] < 0.10 and gaps[1] < gaps[0]
    with pytest.raises(MeshError):
        tube_function(disk, ball, 0.5, _tube_mesh(disk, R, 0.05))


def test_cauchy_schwarz_step(disk, rng):
    m = _tube_mesh(disk, 1.0, 0.1, n_dir=128)
    for _ in range(5):
        h = rng.random(len(m.vertices))
        h[m.boundary] = 0
        s = sobolev_quotient(disk, m, h * h)
        assert s**2 <= 4 * rayleigh_quotient(disk, m, h) * 1.05


def test_chain_report(disk, triangle):
    rep = cheeger_scan(disk, [(0, 0)], [2, 4, 6])
    chain = cheeger_chain_report(disk, rep, 0.26, known_constant=1.0)
    assert chain.ratios_ok and chain.known_slack == pytest.approx(0.01)
    assert chain.quarter_square == pytest.approx(0.25 * rep.best_quotient_zeta**2)
    rep_t = cheeger_scan(triangle, [triangle.centroid], [4, 8, 16])
    chain_t = cheeger_chain_report(triangle, rep_t, 0.05)
    lo, hi = chain_t.ratio_range
    assert chain_t.ratios_ok and lo == pytest.approx(math.pi / 3) and hi == pytest.approx(math.pi / 3)
