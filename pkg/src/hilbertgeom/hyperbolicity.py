"""Empirical Gromov hyperbolicity constants.

Two estimators, both lower bounds of a supremum and not comparable with each
other numerically (the definitions agree only up to bounded factors):

* four-point: for a quadruple with pair sums ``L >= M >= S`` of opposite
  distances, ``(L - M) / 2``; this is the largest value of
  ``min((x.z)_w, (y.z)_w) - (x.y)_w`` over the labellings of the quadruple;
* thin-triangle: how far a point of one side can be from the two other sides,
  sides being straight chords (geodesics of the Hilbert metric).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex_body import ConvexBody, ray_exit, require_interior
from .hilbert_metric import (PointBatch, RayFan, _edge_rays, _fan_from_exits, angular_fan, batch_distances, distances, hilbert_distance,
                             point_batch)

FOUR_POINT = "four-point: max over sampled quadruples of (L - M)/2, L >= M >= S the pair sums"
THIN_TRIANGLE = "thin-triangle: max over side [x,y] of the distance to [y,z] u [z,x]"


@dataclass(frozen=True)
class DeltaEstimate:
    delta: float
    sample_count: int
    scale: float
    method: str
    seed: Optional[int]
    definition: str


def gromov_product(body: ConvexBody, w, x, y) -> float:
    """``(x.y)_w = (d(x, w) + d(y, w) - d(x, y)) / 2``."""
    dxw = hilbert_distance(body, x, w)
    dyw = hilbert_distance(body, y, w)
    dxy = hilbert_distance(body, x, y)
    return max(0.0, 0.5 * (dxw + dyw - dxy))


def polar_sample(body: ConvexBody, center, scale: float, n: int, rng: np.random.Generator) -> PointBatch:
    """Points with uniform direction and Hilbert radius uniform in [0, scale].

    For polygons the direction is the ray towards a boundary point drawn
    uniformly in the graded parameter ``u = log(L / (2 eta))`` of a random half
    edge (eta: distance to the nearer vertex, u up to ``2 scale + 4``). Uniform
    Euclidean angles would essentially never reach the corner parts of large
    balls; the graded parameter spreads the points along the whole sphere.
    """
    s = rng.uniform(0.0, scale, n)
    if body.kind != "polygon":
        ang = rng.uniform(0.0, 2 * np.pi, n)
        fan = angular_fan(body, center, ang)
    else:
        L = body._edges[3]
        m = len(L)
        half = rng.integers(0, 2 * m, n)
        u = rng.uniform(0.0, 2 * scale + 4.0, n)
        edge = half // 2
        start = half % 2 == 0
        eta = 0.5 * L[edge] * np.exp(-u)
        b, e, sl = _edge_rays(body, center, edge, eta, start)
        tp = np.hypot(*(b - center).T)
        tm = ray_exit(body, np.broadcast_to(center, e.shape), -e)
        fan = RayFan(np.asarray(center, float), e, tp, tm, sl, None, e @ body.normals.T)
    pts = fan.points(s[:, None])
    return PointBatch(pts.xy[:, 0], None if pts.slack is None else pts.slack[:, 0])


def quadruple_delta(body: ConvexBody, P: list) -> np.ndarray:
    """Four-point value of each quadruple; P holds four PointBatch of equal length."""
    d = {}
    for i in range(4):
        for j in range(i + 1, 4):
            d[i, j] = batch_distances(body, P[i], P[j])
    S = np.stack([d[0, 1] + d[2, 3], d[0, 2] + d[1, 3], d[0, 3] + d[1, 2]], 1)
    S.sort(axis=1)
    return np.maximum(0.0, 0.5 * (S[:, 2] - S[:, 1]))


def four_point_delta(body: ConvexBody, center, scale: float, samples: int, seed: int = 0,
                     block: int = 4096) -> DeltaEstimate:
    """Largest four-point value over quadruples sampled in Hilbert polar coordinates.

    Block b draws from ``default_rng([seed, b])``, so the quadruples used for
    n samples are a prefix of those used for more: the estimate is monotone in
    ``samples``.
    """
    center = require_interior(body, center, "centre")
    if scale <= 0:
        raise ValueError("scale must be positive")
    best = 0.0
    done = 0
    b = 0
    while done < samples:
        rng = np.random.default_rng([seed, b])
        P = [polar_sample(body, center, scale, block, rng) for _ in range(4)]
        k = min(block, samples - done)
        vals = quadruple_delta(body, [p.take(slice(0, k)) for p in P])
        best = max(best, float(vals.max()))
        done += k
        b += 1
    return DeltaEstimate(best, int(samples), float(scale), "four-point", seed, FOUR_POINT)


def _side(body: ConvexBody, a, b, n: int) -> PointBatch:
    """n + 1 points on the chord [a, b], equally spaced in Hilbert arclength."""
    a = np.asarray(a, dtype=float)
    u = np.asarray(b, dtype=float) - a
    L = float(np.hypot(*u))
    if L == 0:
        return point_batch(body, a[None])
    fan = _fan_from_exits(body, a, (u / L)[None])
    d = float(distances(body, a, np.asarray(b, dtype=float)))
    pts = fan.points((d * np.arange(n + 1) / n)[None])
    return PointBatch(pts.xy[0], None if pts.slack is None else pts.slack[0])


def thin_triangle_delta(body: ConvexBody, x, y, z, samples_per_side: int = 128, oversample: int = 8) -> float:
    """``max_{p in [x,y]} min_{q in [y,z] u [z,x]} d(p, q)`` on sampled sides.

    The other two sides are sampled ``oversample`` times more densely.
    """
    x = require_interior(body, x)
    y = require_interior(body, y)
    z = require_interior(body, z)
    P = _side(body, x, y, samples_per_side)
    m = samples_per_side * oversample
    A = _side(body, y, z, m)
    B = _side(body, z, x, m)
    Q = PointBatch(np.concatenate([A.xy, B.xy]),
                   None if A.slack is None else np.concatenate([A.slack, B.slack]))
    Pb = PointBatch(P.xy[:, None, :], None if P.slack is None else P.slack[:, None, :])
    Qb = PointBatch(Q.xy[None], None if Q.slack is None else Q.slack[None])
    if Pb.slack is not None:
        D = batch_distances(body, Pb, Qb)
    else:
        D = distances(body, np.broadcast_to(Pb.xy, (len(P), len(Q), 2)), np.broadcast_to(Qb.xy, (len(P), len(Q), 2)))
    return float(D.min(1).max())


def thin_triangle_estimate(body: ConvexBody, x, y, z, samples_per_side: int = 128) -> DeltaEstimate:
    """Thin-triangle value with all three sides in turn as the tested side."""
    vals = [thin_triangle_delta(body, a, b, c, samples_per_side) for a, b, c in ((x, y, z), (y, z, x), (z, x, y))]
    scale = max(hilbert_distance(body, x, y), hilbert_distance(body, y, z), hilbert_distance(body, z, x))
    return DeltaEstimate(max(vals), 3 * (samples_per_side + 1), scale, "thin-triangle", None, THIN_TRIANGLE)
