"""Hilbert distance, Finsler norm, tangent unit ball and dual norm.

Besides the scalar API, this module holds the vectorised machinery used by the
measure and spectral code:

* ``PointBatch``: points with, for polygon bodies, their edge slacks;
* ``RayFan``: a family of rays from a centre with chord data, on which the
  point at Hilbert distance ``s`` has a closed form;
* slack based distance and norm formulas, which stay accurate arbitrarily close
  to the boundary of a polygon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex_body import ConvexBody, ray_exit, require_interior

DEFAULT_NDIR = 256
_SAME_POINT = 1e-12
_GOLDEN = (math.sqrt(5) - 1) / 2


# -- point batches ----------------------------------------------------------------

@dataclass(frozen=True)
class PointBatch:
    """Points ``xy`` (n, 2) and, for polygon bodies, edge slacks (n, m)."""

    xy: np.ndarray
    slack: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.xy)

    def take(self, idx) -> "PointBatch":
        return PointBatch(self.xy[idx], None if self.slack is None else self.slack[idx])


def slacks(body: ConvexBody, xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    return body.offsets - xy @ body.normals.T


def point_batch(body: ConvexBody, xy) -> PointBatch:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    return PointBatch(xy, slacks(body, xy) if body.is_polygon else None)


# -- distance -------------------------------------------------------------------------

def distance_from_slacks(sp, sq) -> np.ndarray:
    """Hilbert distance in a polygon from slack vectors (Funk plus reverse Funk)."""
    r = np.asarray(sp) / np.asarray(sq)
    return 0.5 * (np.log(r.max(-1)) - np.log(r.min(-1)))


def distances(body: ConvexBody, p, q) -> np.ndarray:
    """Vectorised Hilbert distance between interior points (no interiority check)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if body.is_polygon:
        return distance_from_slacks(slacks(body, p), slacks(body, q))
    u = q - p
    L = np.hypot(u[..., 0], u[..., 1])
    same = L <= _SAME_POINT
    Ls = np.where(same, 1.0, L)
    e = u / Ls[..., None]
    sb = ray_exit(body, p, e)
    sa = ray_exit(body, p, -e)
    d = 0.5 * (np.log1p(Ls / sa) - np.log1p(-Ls / sb))
    return np.where(same, 0.0, d)


def batch_distances(body: ConvexBody, P: PointBatch, Q: PointBatch) -> np.ndarray:
    if P.slack is not None and Q.slack is not None:
        return distance_from_slacks(P.slack, Q.slack)
    return distances(body, P.xy, Q.xy)


def hilbert_distance(body: ConvexBody, p, q) -> float:
    """Half the log of the cross-ratio ``[a, p, q, b]`` on the chord through p and q."""
    p = require_interior(body, p)
    q = require_interior(body, q)
    if math.hypot(*(q - p)) <= _SAME_POINT:
        return 0.0
    return float(distances(body, p, q))


# -- Finsler norm ---------------------------------------------------------------------

def norm_from_slacks(sp, ds) -> np.ndarray:
    """Finsler norm of a vector whose slack increments are ``ds`` at a point with slacks ``sp``."""
    ratio = np.asarray(ds) / np.asarray(sp)
    return 0.5 * (np.max(-ratio, axis=-1) + np.max(ratio, axis=-1))


def norms(body: ConvexBody, p, u) -> np.ndarray:
    """Vectorised Finsler norm ``|u|/2 (1/t+ + 1/t-)``."""
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    if body.is_polygon:
        sp = slacks(body, p)
        return norm_from_slacks(sp, -(u @ body.normals.T))
    L = np.hypot(u[..., 0], u[..., 1])
    nz = L > 0
    e = u / np.where(nz, L, 1.0)[..., None]
    tp = ray_exit(body, p, e)
    tm = ray_exit(body, p, -e)
    return np.where(nz, 0.5 * L * (1.0 / tp + 1.0 / tm), 0.0)


def finsler_norm(body: ConvexBody, p, u) -> float:
    p = require_interior(body, p)
    return float(norms(body, p, np.asarray(u, dtype=float)))


# -- tangent ball ---------------------------------------------------------------------

@dataclass(frozen=True)
class TangentBall:
    """Polygon approximating the unit ball of the Finsler norm at ``point``."""

    point: np.ndarray
    vertices: np.ndarray
    n_dir: int

    @property
    def area(self) -> float:
        V = self.vertices
        W = np.roll(V, -1, axis=0)
        return float(0.5 * np.sum(V[:, 0] * W[:, 1] - V[:, 1] * W[:, 0]))


def _unit_dirs(n: int, offset: float = 0.0) -> np.ndarray:
    th = offset + 2 * np.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def tangent_unit_ball(body: ConvexBody, p, n_dir: int = DEFAULT_NDIR) -> TangentBall:
    """Unit vectors of the Finsler norm along ``n_dir`` evenly spaced directions."""
    if n_dir < 8 or n_dir % 2:
        raise ValueError("n_dir must be an even count >= 8")
    p = require_interior(body, p)
    E = _unit_dirs(n_dir)
    F = norms(body, np.broadcast_to(p, E.shape), E)
    return TangentBall(p, E / F[:, None], n_dir)


def breakpoint_directions(body: ConvexBody, p) -> np.ndarray:
    """Directions from p where the norm's unit sphere may have a corner or curvature jump."""
    p = np.asarray(p, dtype=float)
    if body.kind == "polygon":
        pts = body.V
    elif body.kind == "rounded_polygon":
        _, T_in, T_out = body._arcs
        pts = np.concatenate([T_in, T_out])
    else:
        return np.zeros(p.shape[:-1] + (0, 2))
    d = pts - p[..., None, :]
    d /= np.hypot(d[..., 0], d[..., 1])[..., None]
    return np.concatenate([d, -d], axis=-2)


def dual_norm(body: ConvexBody, p, l, n_dir: int = DEFAULT_NDIR) -> float:
    """Supremum of the covector ``l`` over the tangent unit ball.

    Sampled maximum over the tangent-ball vertices, refined by a golden-section
    search on the angle; for polygon bodies the exact breakpoint vertices are
    included, which makes the value exact.
    """
    l = np.asarray(l, dtype=float)
    if not np.any(l):
        return 0.0
    return float(_dual_with_argmax(body, p, l, n_dir)[0])


def _dual_with_argmax(body, p, l, n_dir):
    tb = tangent_unit_ball(body, p, n_dir)
    extra = breakpoint_directions(body, tb.point)
    if len(extra):
        Fx = norms(body, np.broadcast_to(tb.point, extra.shape), extra)
        cand = np.concatenate([tb.vertices, extra / Fx[:, None]])
    else:
        cand = tb.vertices
    vals = cand @ l
    k = int(np.argmax(vals))
    best, arg = float(vals[k]), cand[k]
    if body.kind == "polygon":
        return best, arg
    # golden-section refinement on the angle around the sampled argmax
    th0 = math.atan2(arg[1], arg[0])
    h = 2 * np.pi / n_dir

    def g(th):
        e = np.array([math.cos(th), math.sin(th)])
        return float(e @ l) / float(norms(body, tb.point, e)), e

    a, b = th0 - h, th0 + h
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    gc, gd = g(c)[0], g(d)[0]
    for _ in range(60):
        if gc > gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = g(c)[0]
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = g(d)[0]
    v, e = g(0.5 * (a + b))
    if v > best:
        best, arg = v, e / float(norms(body, tb.point, e))
    return best, arg


# -- rays and exact balls -------------------------------------------------------------

def radial_profile(alpha, beta, s):
    """Euclidean radius ``r(s)`` of the point at Hilbert distance s from the centre
    along a chord with end distances alpha (behind) and beta (ahead).

    Returns ``(r, rest, dr/ds)`` where ``rest = beta - r`` is computed without
    cancellation.
    """
    gamma = alpha + beta
    # written with q = exp(-2s) so that large radii neither overflow nor lose digits
    s = np.asarray(s, dtype=float)
    q = np.exp(-2 * s)
    omq = -np.expm1(-2 * s)
    den = gamma * q + alpha * omq
    r = alpha * beta * omq / den
    rest = beta * gamma * q / den
    dr = 2 * alpha * beta * gamma * q / den**2
    return r, rest, dr


@dataclass(frozen=True)
class RayFan:
    """Rays from ``center`` with unit directions, chord end distances, and
    (polygons) exact slacks of the exit point. ``weight`` holds angular
    quadrature weights when the fan was built for integration."""

    center: np.ndarray
    direction: np.ndarray
    t_plus: np.ndarray
    t_minus: np.ndarray
    exit_slack: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None
    normal_dot: Optional[np.ndarray] = None  # n_l . direction, polygons only

    def __len__(self):
        return len(self.t_plus)

    def points(self, s) -> PointBatch:
        """Points at Hilbert distance ``s`` (shape (n_rays, k) or broadcastable) along every ray."""
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            s = np.full((len(self), 1), float(s))
        elif s.ndim == 1:
            s = np.broadcast_to(s, (len(self), len(s)))
        a = self.t_minus[:, None]
        b = self.t_plus[:, None]
        r, rest, _ = radial_profile(a, b, s)
        xy = self.center + r[..., None] * self.direction[:, None, :]
        sl = None
        if self.exit_slack is not None:
            sl = self.exit_slack[:, None, :] + rest[..., None] * self.normal_dot[:, None, :]
        return PointBatch(xy, sl)

    def jacobian(self, s) -> np.ndarray:
        """Polar area factor ``r dr/ds`` at Hilbert radius s."""
        r, _, dr = radial_profile(self.t_minus[:, None], self.t_plus[:, None], s)
        return r * dr


def _fan_from_exits(body: ConvexBody, center, direction, exit_slack=None, weight=None) -> RayFan:
    c = np.asarray(center, dtype=float)
    e = np.asarray(direction, dtype=float)
    tp = ray_exit(body, np.broadcast_to(c, e.shape), e)
    tm = ray_exit(body, np.broadcast_to(c, e.shape), -e)
    if body.is_polygon and exit_slack is None:
        b = c + tp[:, None] * e
        exit_slack = _boundary_slack_from_xy(body, b)
    nd = e @ body.normals.T if body.is_polygon else None
    return RayFan(c, e, tp, tm, exit_slack, weight, nd)


def _boundary_slack_from_xy(body, b):
    """Slacks of boundary points given in coordinates, rebuilt from the nearer edge vertex."""
    n, t, L = body.normals, body._edges[0], body._edges[3]
    s = body.offsets - b @ n.T
    edge = np.argmin(np.abs(s), axis=1)
    m = len(L)
    along = np.einsum("ij,ij->i", b - body.V[edge], t[edge])
    from_start = along <= 0.5 * L[edge]
    SV = body.vertex_slacks
    nt = t @ n.T  # nt[i, l] = n_l . t_i
    s_start = SV[edge] - along[:, None] * nt[edge]
    eta_end = L[edge] - along
    s_end = SV[(edge + 1) % m] + eta_end[:, None] * nt[edge]
    out = np.where(from_start[:, None], s_start, s_end)
    out[np.arange(len(b)), edge] = 0.0
    return np.maximum(out, 0.0)


def angular_fan(body: ConvexBody, center, angles, weight=None) -> RayFan:
    ang = np.asarray(angles, dtype=float)
    e = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return _fan_from_exits(body, center, e, weight=weight)


def _edge_rays(body: ConvexBody, center, edge, eta, from_start):
    """Rays towards boundary points at distance eta from an edge's start (or end) vertex."""
    c = np.asarray(center, dtype=float)
    t, n, _, L = body._edges
    m = len(L)
    SV = body.vertex_slacks
    nt = t @ n.T
    start = body.V[edge]
    end = body.V[(edge + 1) % m]
    sgn = np.where(from_start, 1.0, -1.0)
    base = np.where(from_start[:, None], start, end)
    b = base + (sgn * eta)[:, None] * t[edge]
    base_slack = np.where(from_start[:, None], SV[edge], SV[(edge + 1) % m])
    sl = base_slack - (sgn * eta)[:, None] * nt[edge]
    sl[np.arange(len(edge)), edge] = 0.0
    sl = np.maximum(sl, 0.0)
    d = b - c
    e = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    return b, e, sl


def ordered_fan(body: ConvexBody, center, n_dir: int = DEFAULT_NDIR, depth: float = 0.0,
                grading: float = 0.5) -> RayFan:
    """Counterclockwise fan of rays for ball polygons and polar meshes.

    ``n_dir`` evenly spaced angles plus, for polygon bodies, the rays through
    the vertices and their opposites. With ``depth > 0`` extra rays are placed
    at geometrically shrinking distances from each vertex, down to roughly
    ``exp(-2 depth)``, so that balls of radius up to ``depth`` are resolved near
    the corners. ``grading`` is the log-spacing of those rays.
    """
    c = np.asarray(center, dtype=float)
    ang = 2 * np.pi * np.arange(n_dir) / n_dir
    if body.kind != "polygon":
        extra = breakpoint_directions(body, c)
        if len(extra):
            ang = np.concatenate([ang, np.arctan2(extra[:, 1], extra[:, 0])])
        ang = np.unique(np.mod(ang, 2 * np.pi))
        return angular_fan(body, c, ang)
    t, n, _, L = body._edges
    m = len(L)
    V = body.V
    # uniform rays and opposite-vertex rays: locate their exit points on the boundary
    opp = c - V
    dirs = np.concatenate([np.stack([np.cos(ang), np.sin(ang)], 1), opp / np.hypot(opp[:, 0], opp[:, 1])[:, None]])
    tp = ray_exit(body, np.broadcast_to(c, dirs.shape), dirs)
    b = c + tp[:, None] * dirs
    s_b = body.offsets - b @ n.T
    edge = np.argmin(np.abs(s_b), axis=1)
    along = np.einsum("ij,ij->i", b - V[edge], t[edge])
    from_start = along <= 0.5 * L[edge]
    eta = np.where(from_start, along, L[edge] - along)
    keep = eta > 1e-12 * L[edge]  # rays that hit a vertex are added exactly below
    edge, eta, from_start = edge[keep], eta[keep], from_start[keep]
    # graded rays near the vertices
    if depth > 0:
        umax = 2 * depth + 8.0
        u = np.arange(grading, umax, grading)
        g_edge, g_eta, g_start = [], [], []
        for k in range(m):
            for e_idx, st in ((k, True), ((k - 1) % m, False)):
                g_edge.append(np.full(len(u), e_idx))
                g_eta.append(0.5 * L[e_idx] * np.exp(-u))
                g_start.append(np.full(len(u), st))
        edge = np.concatenate([edge] + g_edge)
        eta = np.concatenate([eta] + g_eta)
        from_start = np.concatenate([from_start] + g_start)
    # vertex rays: eta = 0 measured from the start of the outgoing edge
    edge = np.concatenate([edge, np.arange(m)])
    eta = np.concatenate([eta, np.zeros(m)])
    from_start = np.concatenate([from_start, np.ones(m, bool)])
    # order along the boundary: by edge, then start-half ascending eta, end-half descending eta
    key_half = np.where(from_start, 0, 1)
    key_eta = np.where(from_start, eta, -eta)
    order = np.lexsort((key_eta, key_half, edge))
    edge, eta, from_start = edge[order], eta[order], from_start[order]
    # drop duplicates: equal positions along the same edge, relative to the distance to its vertex
    along = np.where(from_start, eta, L[edge] - eta)
    dup = np.zeros(len(edge), bool)
    dup[1:] = (edge[1:] == edge[:-1]) & (
        np.abs(along[1:] - along[:-1]) <= 1e-12 * np.minimum(eta[1:], eta[:-1]))
    edge, eta, from_start = edge[~dup], eta[~dup], from_start[~dup]
    bpts, e, sl = _edge_rays(body, c, edge, eta, from_start)
    tp = np.hypot(*(bpts - c).T)
    tm = ray_exit(body, np.broadcast_to(c, e.shape), -e)
    return RayFan(c, e, tp, tm, sl, None, e @ n.T)


def quadrature_fan(body: ConvexBody, center, depth: float = 1.0, n_nodes: int = 0) -> RayFan:
    """Rays carrying angular quadrature weights summing to ``2 pi``.

    Polygons: on each half edge the boundary point is parametrised by
    ``u = log(L / (2 eta))`` with eta the distance to the nearer vertex, and
    Gauss-Legendre nodes are used in ``u``; this resolves the corners of deep
    balls. Ellipses use the trapezoid rule in the angle; rounded polygons use
    Gauss-Legendre between breakpoint directions.
    """
    c = np.asarray(center, dtype=float)
    if body.kind == "ellipse":
        n = n_nodes or 256
        return angular_fan(body, c, 2 * np.pi * np.arange(n) / n, np.full(n, 2 * np.pi / n))
    if body.kind == "rounded_polygon":
        br = breakpoint_directions(body, c)
        a = np.sort(np.mod(np.arctan2(br[:, 1], br[:, 0]), 2 * np.pi))
        a = np.unique(a)
        lo, hi = a, np.r_[a[1:], a[0] + 2 * np.pi]
        k = n_nodes or 16
        x, w = np.polynomial.legendre.leggauss(k)
        half = 0.5 * (hi - lo)
        ang = (0.5 * (hi + lo))[:, None] + half[:, None] * x
        wt = half[:, None] * w
        return angular_fan(body, c, ang.ravel(), wt.ravel())
    t, n, _, L = body._edges
    m = len(L)
    V = body.V
    umax = 2 * depth + 36.0
    k_total = n_nodes or int(32 + 1.5 * umax)
    # split each half edge where the opposite-vertex rays land: the entry edge changes there
    opp = c - V
    opp /= np.hypot(opp[:, 0], opp[:, 1])[:, None]
    tq = ray_exit(body, np.broadcast_to(c, opp.shape), opp)
    hits = c + tq[:, None] * opp
    h_edge = np.argmin(np.abs(body.offsets - hits @ n.T), axis=1)
    h_along = np.einsum("ij,ij->i", hits - V[h_edge], t[h_edge])
    edge, eta, start, wt = [], [], [], []
    for e_idx in range(m):
        for st in (True, False):
            cuts = [0.0, umax]
            for he, ha in zip(h_edge, h_along):
                if he != e_idx:
                    continue
                et = ha if st else L[e_idx] - ha
                if 0 < et < 0.5 * L[e_idx]:
                    cuts.append(math.log(0.5 * L[e_idx] / et))
            cuts = np.sort(cuts)
            for u0, u1 in zip(cuts[:-1], cuts[1:]):
                if u1 - u0 <= 1e-12:
                    continue
                k = max(8, int(math.ceil(k_total * (u1 - u0) / umax)))
                x, w = np.polynomial.legendre.leggauss(k)
                u = u0 + 0.5 * (u1 - u0) * (x + 1)
                et = 0.5 * L[e_idx] * np.exp(-u)
                edge.append(np.full(k, e_idx))
                eta.append(et)
                start.append(np.full(k, st))
                wt.append(0.5 * (u1 - u0) * w * et)
    s_c = body.offsets - c @ n.T
    edge = np.concatenate(edge)
    eta = np.concatenate(eta)
    start = np.concatenate(start)
    wt = np.concatenate(wt)
    b, e, sl = _edge_rays(body, c, edge, eta, start)
    d2 = ((b - c) ** 2).sum(1)
    wt = wt * s_c[edge] / d2
    tp = np.sqrt(d2)
    tm = ray_exit(body, np.broadcast_to(c, e.shape), -e)
    return RayFan(c, e, tp, tm, sl, wt, e @ n.T)


def diagonal_crossings(body: ConvexBody, fan: RayFan, R: float) -> np.ndarray:
    """Hilbert radii in (0, R) where each ray crosses a polygon diagonal, as an
    (n_rays, n_diag) array with ``nan`` for misses. Along such crossings the
    density of a polygon body is not smooth."""
    m = len(body.V)
    pairs = [(i, j) for i in range(m) for j in range(i + 2, m) if not (i == 0 and j == m - 1)]
    if not pairs:
        return np.zeros((len(fan), 0))
    V = body.V
    A = V[[i for i, _ in pairs]]
    B = V[[j for _, j in pairs]]
    c = fan.center
    e = fan.direction
    D = B - A
    # solve c + t e = A + w D
    det = e[:, None, 0] * (-D[None, :, 1]) - e[:, None, 1] * (-D[None, :, 0])
    rhs = A[None] - c
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rhs[..., 0] * (-D[None, :, 1]) - rhs[..., 1] * (-D[None, :, 0])) / det
        w = (e[:, None, 0] * rhs[..., 1] - e[:, None, 1] * rhs[..., 0]) / det
    a, bb = fan.t_minus[:, None], fan.t_plus[:, None]
    ok = (t > 0) & (t < bb) & (w > 0) & (w < 1) & np.isfinite(t)
    tt = np.where(ok, t, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = 0.5 * (np.log1p(tt / a) - np.log1p(-tt / bb))
    s = np.where(ok & (s < R) & (s > 0), s, np.nan)
    return s
