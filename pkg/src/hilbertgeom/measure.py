"""Busemann density, Hilbert measure of regions, Finsler length, metric balls.

The scalar ``busemann_density`` follows the sampled tangent-ball definition.
Bulk computations go through ``local_norms``, which describes the tangent norm
at many points at once in a form where density and dual norm are cheap:

* polygon bodies: the exact polygonal unit ball, written in the chart
  ``(s_i, s_j)`` of the point's two smallest slacks, so that deep points keep
  full relative precision;
* ellipses: the exact quadratic form of the Klein metric;
* rounded polygons: a sampled polygonal unit ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import shapely
from scipy.stats import qmc

from .convex_body import (BOUNDARY_TOL, ConvexBody, NotInteriorError, is_interior, polygon_area,
                          ray_exit, require_interior, signed_boundary_distance)
from .hilbert_metric import (DEFAULT_NDIR, PointBatch, breakpoint_directions, diagonal_crossings,
                             distance_from_slacks, distances,
                             norm_from_slacks, norms, ordered_fan, point_batch, quadrature_fan,
                             tangent_unit_ball)

OMEGA = {1: 2.0, 2: math.pi}


def omega(n: int) -> float:
    """Lebesgue measure of the Euclidean unit n-ball."""
    if n in OMEGA:
        return OMEGA[n]
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


# -- local tangent norms ----------------------------------------------------------

@dataclass
class LocalNorms:
    """Tangent norms at a batch of points, each expressed in a linear frame.

    ``frame[k]`` maps Euclidean vectors to frame coordinates at point k. Either
    ``vertices`` (k, K, 2) holds the unit ball polygon in frame coordinates
    (counterclockwise or clockwise, consistently), or ``metric`` (k, 2, 2) holds
    the quadratic form ``F(v)^2 = v^T G v``. ``chart`` gives the two slack
    indices used as frame for polygon bodies.
    """

    frame: np.ndarray
    density: np.ndarray
    vertices: Optional[np.ndarray] = None
    metric: Optional[np.ndarray] = None
    chart: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.density)

    @property
    def dual_metric(self) -> np.ndarray:
        return np.linalg.inv(self.metric)

    def dual(self, g: np.ndarray):
        """Dual norm of frame covectors ``g`` (k, 2) and a maximising unit vector."""
        if self.metric is not None:
            Q = self.dual_metric
            Qg = np.einsum("kij,kj->ki", Q, g)
            val = np.sqrt(np.maximum(np.einsum("ki,ki->k", g, Qg), 0.0))
            safe = np.where(val > 0, val, 1.0)
            return val, Qg / safe[:, None]
        vals = np.einsum("kvi,ki->kv", self.vertices, g)
        j = np.argmax(vals, axis=1)
        idx = np.arange(len(g))
        return vals[idx, j], self.vertices[idx, j]

    def ball_area(self) -> np.ndarray:
        """Area of the unit ball in frame coordinates."""
        if self.metric is not None:
            return math.pi / np.sqrt(np.linalg.det(self.metric))
        return _shoelace(self.vertices)

    def quadratic_proxy(self) -> np.ndarray:
        """Symmetric form ``H`` with ``g^T H g`` close to the squared dual norm."""
        if self.metric is not None:
            return self.dual_metric
        W = self.vertices
        return 2.0 / W.shape[1] * np.einsum("kvi,kvj->kij", W, W)

    def coords(self, batch: PointBatch) -> np.ndarray:
        """Frame coordinates of the same points (affine chart)."""
        if self.chart is not None:
            return chart_coords(self.chart, batch.slack)
        return np.einsum("kij,kj->ki", self.frame, batch.xy)


def chart_coords(chart: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Gather slack pairs: ``S`` (k, ..., m) with per-row chart (k, 2) -> (k, ..., 2)."""
    shape = (-1,) + (1,) * (S.ndim - 1)
    zi = np.take_along_axis(S, chart[:, 0].reshape(shape), -1)[..., 0]
    zj = np.take_along_axis(S, chart[:, 1].reshape(shape), -1)[..., 0]
    return np.stack([zi, zj], axis=-1)


def _shoelace(W: np.ndarray) -> np.ndarray:
    Wn = np.roll(W, -1, axis=-2)
    return np.abs(0.5 * np.sum(W[..., 0] * Wn[..., 1] - W[..., 1] * Wn[..., 0], axis=-1))


def choose_chart(body: ConvexBody, S: np.ndarray) -> np.ndarray:
    """Indices of the smallest slack and of the smallest slack on a well-separated edge."""
    n = body.normals
    i = np.argmin(S, axis=-1)
    cr = np.abs(n[:, 0][None, :] * n[:, 1][:, None] - n[:, 1][None, :] * n[:, 0][:, None])
    ok = cr[i] > 0.1
    j = np.argmin(np.where(ok, S, np.inf), axis=-1)
    return np.stack([i, j], axis=-1)


def _polygon_norms(body: ConvexBody, S: np.ndarray, chart: Optional[np.ndarray] = None) -> LocalNorms:
    if chart is None:
        chart = choose_chart(body, S)
    SV = body.vertex_slacks
    dS = SV[None, :, :] - S[:, None, :]  # (k, m_v, m)
    F = norm_from_slacks(S[:, None, :], dS)
    dz = chart_coords(chart, dS)  # (k, m_v, 2)
    W = dz / F[..., None]
    W = np.concatenate([W, -W], axis=1)
    # the ball can be extremely anisotropic in chart coordinates; a diagonal
    # rescaling keeps the angular order while avoiding ties in atan2
    scale = np.abs(W).max(axis=1)
    Wn = W / scale[:, None, :]
    order = np.argsort(np.arctan2(Wn[..., 1], Wn[..., 0]), axis=1)
    W = np.take_along_axis(W, order[..., None], axis=1)
    Wn = np.take_along_axis(Wn, order[..., None], axis=1)
    n = body.normals
    J = -np.stack([n[chart[:, 0]], n[chart[:, 1]]], axis=1)
    area = _shoelace(Wn) * scale[:, 0] * scale[:, 1]
    dens = math.pi * np.abs(np.linalg.det(J)) / area
    return LocalNorms(J, dens, vertices=W, chart=chart)


def klein_metric(body: ConvexBody, xy: np.ndarray) -> np.ndarray:
    """Quadratic form of the Hilbert norm of an ellipse (the Klein model metric)."""
    c, Rot, ax = body._ellipse_frame
    A = (Rot / ax).T  # u = A (x - c) maps the ellipse to the unit disk
    u = (xy - c) @ A.T
    w = 1.0 - (u**2).sum(-1)
    Gd = np.eye(2)[None] / w[:, None, None] + np.einsum("ki,kj->kij", u, u) / (w**2)[:, None, None]
    return np.einsum("ai,kab,bj->kij", A, Gd, A)


def _sampled_norms(body: ConvexBody, xy: np.ndarray, n_dir: int, chunk: int = 4096) -> LocalNorms:
    W_all = []
    for lo in range(0, len(xy), chunk):
        p = xy[lo:lo + chunk]
        E = np.stack([np.cos(2 * np.pi * np.arange(n_dir) / n_dir), np.sin(2 * np.pi * np.arange(n_dir) / n_dir)], 1)
        Ek = np.broadcast_to(E, (len(p), n_dir, 2))
        extra = breakpoint_directions(body, p)
        Ek = np.concatenate([Ek, extra], axis=1)
        P = np.broadcast_to(p[:, None, :], Ek.shape)
        F = norms(body, P, Ek)
        W = Ek / F[..., None]
        ang = np.arctan2(W[..., 1], W[..., 0])
        W_all.append(np.take_along_axis(W, np.argsort(ang, axis=1)[..., None], axis=1))
    W = np.concatenate(W_all)
    J = np.broadcast_to(np.eye(2), (len(xy), 2, 2)).copy()
    return LocalNorms(J, math.pi / _shoelace(W), vertices=W)


def local_norms(body: ConvexBody, batch: PointBatch, n_dir: int = 64) -> LocalNorms:
    """Tangent norms at every point of the batch (see module docstring)."""
    if body.kind == "polygon":
        S = batch.slack if batch.slack is not None else point_batch(body, batch.xy).slack
        return _polygon_norms(body, S)
    if body.kind == "ellipse":
        G = klein_metric(body, batch.xy)
        J = np.broadcast_to(np.eye(2), G.shape).copy()
        return LocalNorms(J, np.sqrt(np.linalg.det(G)), metric=G)
    return _sampled_norms(body, batch.xy, n_dir)


def densities(body: ConvexBody, batch: PointBatch) -> np.ndarray:
    return local_norms(body, batch).density


def flatten(batch: PointBatch) -> PointBatch:
    xy = batch.xy.reshape(-1, 2)
    sl = None if batch.slack is None else batch.slack.reshape(-1, batch.slack.shape[-1])
    return PointBatch(xy, sl)


def busemann_density(body: ConvexBody, p, n_dir: int = DEFAULT_NDIR) -> float:
    """``pi / area(tangent unit ball)`` with the sampled tangent ball."""
    return math.pi / tangent_unit_ball(body, p, n_dir).area


# -- regions ------------------------------------------------------------------------------

class RegionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Region:
    """Closed polygonal subdomain; ``boundary`` is counterclockwise.

    Metric balls also record their centre and radius, and for polygon bodies
    the exact slacks of their boundary vertices.
    """

    boundary: np.ndarray
    slack: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    @property
    def euclidean_area(self) -> float:
        return polygon_area(self.boundary)

    @property
    def is_ball(self) -> bool:
        return self.center is not None and self.radius is not None

    def polygon(self):
        return shapely.Polygon(self.boundary)


def make_region(body: ConvexBody, boundary, check: bool = True) -> Region:
    P = np.asarray(boundary, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or len(P) < 3:
        raise RegionError("region boundary needs at least 3 points")
    a = polygon_area(P)
    if not abs(a) > 0:
        raise RegionError("region has empty interior")
    if a < 0:
        P = P[::-1]
    if check:
        if not shapely.Polygon(P).is_valid:
            raise RegionError("region boundary is not simple")
        if not np.all(is_interior(body, P)):
            raise RegionError("region vertices must be strictly interior to the body")
    return Region(P)


def _check_region_interior(body: ConvexBody, region: Region):
    if region.slack is not None:
        if np.any(region.slack <= 0):
            raise RegionError("region touches the boundary")
        return
    d = signed_boundary_distance(body, region.boundary)
    if np.any(d > -BOUNDARY_TOL):
        raise RegionError("region touches the boundary within tolerance (density unbounded)")


# -- measure estimates ------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    abs_error: float
    method: str
    sample_count: int
    seed: Optional[int] = None


def _ball_polar(body: ConvexBody, center, R: float, n_ang: int, n_rad: int) -> float:
    fan = quadrature_fan(body, center, depth=R, n_nodes=n_ang)
    x, w = np.polynomial.legendre.leggauss(n_rad)
    if body.is_polygon:
        cuts = diagonal_crossings(body, fan, R)
        cuts = np.sort(np.where(np.isnan(cuts), R, cuts), axis=1)
        edges = np.concatenate([np.zeros((len(fan), 1)), cuts, np.full((len(fan), 1), R)], axis=1)
    else:
        edges = np.tile([0.0, R], (len(fan), 1))
    lo, hi = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (hi - lo)
    s = (0.5 * (hi + lo))[..., None] + half[..., None] * x  # (rays, segs, nodes)
    ws = half[..., None] * w
    s = s.reshape(len(fan), -1)
    ws = ws.reshape(len(fan), -1)
    pts = fan.points(s)
    h = densities(body, flatten(pts)).reshape(s.shape)
    J = fan.jacobian(s)
    return float(np.sum(fan.weight[:, None] * ws * J * h))


def ball_volume(body: ConvexBody, center, R: float, n_ang: int = 0, n_rad: int = 0) -> MeasureEstimate:
    """Hilbert measure of ``B_R(center)`` by polar quadrature on the exact ball.

    The error estimate compares with a run using about two thirds of the nodes.
    """
    center = require_interior(body, center, "ball centre")
    if R <= 0:
        return MeasureEstimate(0.0, 0.0, "polar-quadrature", 0)
    if body.kind == "ellipse":
        na = n_ang or 256
    elif body.kind == "rounded_polygon":
        na = n_ang or 8
    else:
        na = n_ang or int(32 + 1.5 * (2 * R + 36))
    nr = n_rad or max(16, int(8 + 3 * R))
    fine = _ball_polar(body, center, R, na, nr)
    coarse = _ball_polar(body, center, R, max(4, 2 * na // 3), max(8, 2 * nr // 3))
    return MeasureEstimate(fine, abs(fine - coarse), "polar-quadrature", 0)


@lru_cache(maxsize=16)
def _grid_density(body: ConvexBody, cell: float):
    lo, hi = body.bbox
    nx = int(math.ceil((hi[0] - lo[0]) / cell))
    ny = int(math.ceil((hi[1] - lo[1]) / cell))
    xs = lo[0] + cell * (np.arange(nx) + 0.5)
    ys = lo[1] + cell * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], 1)
    inside = is_interior(body, pts)
    h = np.zeros(len(pts))
    if np.any(inside):
        h[inside] = densities(body, point_batch(body, pts[inside]))
    return xs, ys, h.reshape(ny, nx), inside.reshape(ny, nx)


def grid_density(body: ConvexBody, cell: float):
    """Cell-centre grid over the body's bounding box with Busemann density (0 outside); cached."""
    return _grid_density(body, float(cell))


def _grid_integral(body, region: Region, cell: float, f=None):
    xs, ys, h, _ = grid_density(body, cell)
    X, Y = np.meshgrid(xs, ys)
    poly = region.polygon()
    shapely.prepare(poly)
    mask = shapely.contains_xy(poly, X, Y)
    vals = h if f is None else h * f(np.stack([X, Y], -1))
    return float(np.sum(vals[mask]) * cell * cell), int(mask.sum())


def region_volume(body: ConvexBody, region: Region, resolution: Optional[float] = None,
                  method: str = "auto", seed: int = 0, samples: int = 1 << 14) -> MeasureEstimate:
    """Hilbert measure of a region.

    ``method``: ``grid`` (midpoint rule, error from the comparison with the
    doubled resolution), ``monte-carlo`` (seeded scrambled Halton points),
    ``polar`` (metric balls only) or ``auto``: polar for metric balls, else the
    grid, switching to Monte Carlo when the region is thinner than 3 cells.
    """
    if method == "auto":
        method = "polar" if region.is_ball else "grid"
    if method == "polar":
        if not region.is_ball:
            raise RegionError("polar quadrature needs a metric ball region")
        _check_region_interior(body, region)
        return ball_volume(body, region.center, region.radius)
    _check_region_interior(body, region)
    cell = float(resolution) if resolution else body.diameter / 200
    poly = region.polygon()
    width = 2 * poly.area / max(poly.length, 1e-300)
    if method == "grid" and width < 3 * cell:
        method = "monte-carlo"
    if method == "grid":
        v, n = _grid_integral(body, region, cell)
        v2, _ = _grid_integral(body, region, cell / 2)
        return MeasureEstimate(v, abs(v - v2), "grid-quadrature", n)
    if method == "monte-carlo":
        lo = region.boundary.min(0)
        hi = region.boundary.max(0)
        reps = 8
        per = max(1, samples // reps)
        est = []
        for r in range(reps):
            eng = qmc.Halton(d=2, scramble=True, seed=np.random.default_rng([seed, r]))
            u = lo + (hi - lo) * eng.random(per)
            inside = shapely.contains_xy(poly, u[:, 0], u[:, 1])
            h = np.zeros(per)
            if np.any(inside):
                h[inside] = densities(body, point_batch(body, u[inside]))
            est.append(np.prod(hi - lo) * h.mean())
        est = np.asarray(est)
        return MeasureEstimate(float(est.mean()), float(est.std(ddof=1) / math.sqrt(reps)),
                               "monte-carlo", per * reps, seed)
    raise ValueError(f"unknown method {method!r}")


# -- lengths ------------------------------------------------------------------------------

def _polyline_data(body, polyline, slack, closed):
    if isinstance(polyline, Region):
        slack = polyline.slack if slack is None else slack
        P = polyline.boundary
        closed = True
    else:
        P = np.asarray(polyline, dtype=float).reshape(-1, 2)
    if slack is None and body.is_polygon and len(P):
        slack = point_batch(body, P).slack
    if closed and len(P) > 1:
        P = np.concatenate([P, P[:1]])
        if slack is not None:
            slack = np.concatenate([slack, slack[:1]])
    return P, slack


def segment_lengths(body: ConvexBody, P, S, level: int) -> np.ndarray:
    """Finsler length of each segment by the midpoint rule on ``2**level`` pieces."""
    k = 1 << level
    lam = (np.arange(k) + 0.5) / k
    if S is not None:
        Sa, Sb = S[:-1], S[1:]
        dS = (Sb - Sa) / k
        Sm = (1 - lam)[None, :, None] * Sa[:, None, :] + lam[None, :, None] * Sb[:, None, :]
        F = norm_from_slacks(Sm, dS[:, None, :])
        return F.sum(1)
    a, b = P[:-1], P[1:]
    d = (b - a) / k
    M = a[:, None, :] + lam[None, :, None] * (b - a)[:, None, :]
    F = norms(body, M, np.broadcast_to(d[:, None, :], M.shape))
    return F.sum(1)


def curve_length(body: ConvexBody, polyline, closed: bool = False, slack=None, rtol: float = 1e-6,
                 max_level: int = 14, method: str = "geodesic") -> float:
    """Finsler length of a polyline (or of a region's boundary).

    Straight segments are geodesics of a Hilbert geometry, so by default each
    segment contributes the distance between its endpoints (exact). With
    ``method="midpoint"`` segments are split into ``2**k`` pieces measured with
    the norm at their midpoints, k growing until two successive totals agree to
    ``rtol``.
    """
    P, S = _polyline_data(body, polyline, slack, closed)
    if len(P) < 2:
        return 0.0
    if S is None and not np.all(is_interior(body, P)):
        raise NotInteriorError("polyline leaves the body interior")
    if method == "geodesic":
        if S is not None:
            return float(np.sum(distance_from_slacks(S[:-1], S[1:])))
        return float(np.sum(distances(body, P[:-1], P[1:])))
    if method != "midpoint":
        raise ValueError(f"unknown method {method!r}")
    prev = segment_lengths(body, P, S, 0).sum()
    budget = 1 << 22
    for level in range(1, max_level + 1):
        if (len(P) - 1) << level > budget:
            break
        cur = segment_lengths(body, P, S, level).sum()
        if abs(cur - prev) <= rtol * abs(cur):
            return float(cur)
        prev = cur
    return float(prev)


# -- metric balls -------------------------------------------------------------------------

def metric_ball(body: ConvexBody, x, R: float, n_dir: int = DEFAULT_NDIR, depth: float = 0.0) -> Region:
    """Polygon through the points at Hilbert distance R along a fan of rays.

    The fan has ``n_dir`` evenly spaced directions; for polygon bodies the rays
    through the corners and their opposites are added (for a triangle these carry
    the ball's corners, so the polygon is exact). ``depth > 0`` adds rays graded
    towards the corners.
    """
    x = require_interior(body, x, "ball centre")
    if not R > 0:
        raise ValueError("radius must be positive")
    fan = ordered_fan(body, x, n_dir, depth)
    pts = fan.points(float(R))
    S = None if pts.slack is None else pts.slack[:, 0, :]
    return Region(pts.xy[:, 0, :], S, x, float(R))


def adaptive_ball(body: ConvexBody, x, R: float, max_edge: float = 0.02, n_min: int = DEFAULT_NDIR,
                  n_max: int = 1 << 17) -> Region:
    """Metric ball polygon whose edges have Finsler length at most about ``max_edge``."""
    coarse = metric_ball(body, x, R, n_min)
    L = curve_length(body, coarse, rtol=1e-3)
    n = int(min(n_max, max(n_min, 2 * math.ceil(L / max_edge / 2))))
    return metric_ball(body, x, R, n)


# -- closed-form bounds ---------------------------------------------------------------------

def ball_volume_bounds(R: float, n: int = 2):
    """Constants C1(R, n) <= mu(B_R) <= C2(R, n) valid in every Hilbert geometry."""
    w = omega(n)
    C1 = w / (4 * math.exp(2 * n * R)) * (math.expm1(2 * R) / math.expm1(2 * (R + 1))) ** n
    C2 = (math.expm1(4 * R) / 2) ** n * w
    return C1, C2


def tangent_ratio_bounds(R: float, n: int = 2):
    """Bounds c1, c2 on ``vol_e(B_R(x)) / vol_e(R TB(x))``."""
    q = math.expm1(2 * R) / (2 * R)
    return (q * math.exp(-2 * R)) ** n, q**n


def corollary_ratio_bounds(R: float, n: int = 2):
    """The R-free variants ``((e^{2R}-1)/(2 e^{2R}))^n`` and ``((e^{2R}-1)/2)^n``."""
    q = math.expm1(2 * R) / 2
    return (q * math.exp(-2 * R)) ** n, q**n


def tangent_ball_area(body: ConvexBody, x) -> float:
    """Euclidean area of the (exact where available) tangent unit ball at x."""
    ln = local_norms(body, point_batch(body, np.asarray(x, float)[None]))
    return float(math.pi / ln.density[0])


def inclusion_check(body: ConvexBody, x, R: float, n_dir: int = 64):
    """Per direction, the ratios ``r_T / r_B`` of tangent-ball to metric-ball radii,
    which must lie in ``[2R/(e^{2R}-1), 2R e^{2R}/(e^{2R}-1)]``."""
    x = require_interior(body, x)
    th = 2 * np.pi * np.arange(n_dir) / n_dir
    E = np.stack([np.cos(th), np.sin(th)], 1)
    X = np.broadcast_to(x, E.shape)
    tp = ray_exit(body, X, E)
    tm = ray_exit(body, X, -E)
    Em1 = math.expm1(2 * R)
    rB = tm * tp * Em1 / (tm + tp + Em1 * tm)
    rT = R / norms(body, X, E)
    lo = 2 * R / Em1
    hi = 2 * R * (Em1 + 1) / Em1
    return rT / rB, lo, hi
