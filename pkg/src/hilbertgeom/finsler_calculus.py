"""Calculus of general plane norms: normality, the zeta factor, hypersurface
measure, Finsler gradient and a numerical co-area check.

A hypersurface element with tangent ``t`` gets the normal ``n`` for which
``n -| t`` (the supporting line of the unit ball at ``n`` is parallel to t).
Its measure relative to the Finsler length is ``zeta(n)``, which reduces to

    nu(segment) = pi * F*(t^perp) / area(B_F),

a ratio of two area forms, hence independent of the linear frame. This is what
makes the computation stable in slack charts close to a polygon's boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize_scalar
from skimage.measure import find_contours

from .convex_body import ConvexBody, NotInteriorError, is_interior, require_interior
from .hilbert_metric import (PointBatch, distance_from_slacks, distances, norm_from_slacks, norms,
                             point_batch)
from .measure import (ball_volume, chart_coords, grid_density, local_norms, metric_ball,
                      _polygon_norms, _polyline_data, klein_metric)

C2 = math.pi / 2  # vol(B^2) / vol(B^1)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _perp(v):
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _gauge(V: np.ndarray):
    """Minkowski functional of a convex polygon (ccw, containing the origin)."""
    W = np.roll(V, -1, axis=0)
    n = _perp(V - W)  # outward for ccw order
    c = np.sum(n * V, axis=1)
    n = n / c[:, None]

    def F(v):
        v = np.asarray(v, dtype=float)
        return np.max(v @ n.T, axis=-1)
    return F


def _ccw(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    return V[np.argsort(np.arctan2(V[:, 1], V[:, 0]))]


# -- norms ---------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Norm2D:
    """A norm on the plane.

    ``vertices`` (ccw) is the exact unit ball of a polyhedral norm, ``metric``
    the Gram matrix of an inner-product norm; otherwise the norm is only known
    through ``evaluate``.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    provenance: str
    vertices: Optional[np.ndarray] = None
    metric: Optional[np.ndarray] = None

    def __call__(self, v):
        return self.evaluate(np.asarray(v, dtype=float))

    # constructors
    @classmethod
    def euclidean(cls) -> "Norm2D":
        return cls.from_metric(np.eye(2), "euclidean")

    @classmethod
    def from_metric(cls, G, provenance: str = "custom-metric") -> "Norm2D":
        G = np.array(G, dtype=float)

        def F(v):
            return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", v, G, v), 0.0))
        return cls(F, provenance, metric=G)

    @classmethod
    def from_polygon(cls, vertices, provenance: str = "custom-polygon") -> "Norm2D":
        V = _ccw(vertices)
        return cls(_gauge(V), provenance, vertices=V)

    @classmethod
    def hexagonal(cls) -> "Norm2D":
        th = np.pi / 3 * np.arange(6)
        return cls.from_polygon(np.stack([np.cos(th), np.sin(th)], 1), "hexagonal")

    @classmethod
    def hilbert(cls, body: ConvexBody, p) -> "Norm2D":
        """Tangent norm of the Hilbert metric at p (exact unit ball for polygons and ellipses)."""
        p = require_interior(body, p)
        prov = "hilbert-at-point"

        def F(v):
            v = np.asarray(v, dtype=float)
            return norms(body, np.broadcast_to(p, v.shape), v)
        if body.kind == "polygon":
            D = body.V - p
            W = D / norms(body, np.broadcast_to(p, D.shape), D)[:, None]
            return cls(F, prov, vertices=_ccw(np.concatenate([W, -W])))
        if body.kind == "ellipse":
            return cls(F, prov, metric=klein_metric(body, p[None])[0])
        return cls(F, prov)

    # geometry of the unit ball
    def unit_ball(self, n: int = 4096) -> np.ndarray:
        if self.vertices is not None:
            return self.vertices
        th = 2 * np.pi * np.arange(n) / n
        E = np.stack([np.cos(th), np.sin(th)], 1)
        return E / self(E)[:, None]

    def area(self) -> float:
        """Euclidean area of the unit ball."""
        if self.metric is not None:
            return math.pi / math.sqrt(np.linalg.det(self.metric))
        V = self.unit_ball()
        return float(0.5 * np.sum(_cross(V, np.roll(V, -1, axis=0))))

    def dual(self, l):
        """``(F*(l), X)`` with X a unit vector maximising l."""
        l = np.asarray(l, dtype=float)
        if self.metric is not None:
            Ql = np.linalg.solve(self.metric, l)
            val = math.sqrt(max(float(l @ Ql), 0.0))
            return val, (Ql / val if val > 0 else np.zeros(2))
        V = self.unit_ball()
        vals = V @ l
        k = int(np.argmax(vals))
        if self.vertices is not None:
            return float(vals[k]), V[k]
        th0 = math.atan2(V[k, 1], V[k, 0])
        h = 2 * np.pi / len(V)

        def neg(th):
            e = np.array([math.cos(th), math.sin(th)])
            return -float(e @ l) / float(self(e))
        res = minimize_scalar(neg, bounds=(th0 - h, th0 + h), method="bounded", options={"xatol": 1e-12})
        e = np.array([math.cos(res.x), math.sin(res.x)])
        if -res.fun > vals[k]:
            return -float(res.fun), e / float(self(e))
        return float(vals[k]), V[k]


# -- normality -----------------------------------------------------------------------------

def is_normal(F: Norm2D, x, y, tol: float = 1e-9, n_samples: int = 1000) -> bool:
    """Whether ``x -| y``: ``F(x + a y) >= F(x)`` for every real a (sampled, then refined)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Fx = float(F(x))
    Fy = float(F(y))
    if Fy == 0:
        return True
    A = 4 * Fx / Fy
    a = np.linspace(-A, A, n_samples + 1)
    vals = F(x[None] + a[:, None] * y[None])
    k = int(np.argmin(vals))
    lo, hi = a[max(k - 1, 0)], a[min(k + 1, n_samples)]
    res = minimize_scalar(lambda t: float(F(x + t * y)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    best = min(float(vals[k]), float(res.fun))
    return best >= Fx - tol * max(1.0, Fx)


class NormalLine(NamedTuple):
    direction: np.ndarray
    fan: bool  # True when the supporting lines at y form a fan (corner of the ball)


def _orient(y, w):
    w = w / np.hypot(*w)
    return w if _cross(y, w) > 0 else -w


def normal_line(F: Norm2D, y) -> NormalLine:
    """Unit w with ``y -| w``: the direction of a supporting line of the unit ball at y/F(y).

    The orientation is counterclockwise relative to y. At a corner the angular
    midpoint of the fan of supporting lines is returned with ``fan=True``.
    """
    y = np.asarray(y, dtype=float)
    if F.metric is not None:
        return NormalLine(_orient(y, _perp(F.metric @ y)), False)
    if F.vertices is not None:
        V = F.vertices
        W = np.roll(V, -1, axis=0)
        T = W - V
        n = _perp(V - W)
        r = (n @ y) / np.sum(n * V, axis=1)
        k = int(np.argmax(r))
        rs = np.sort(r)
        if rs[-1] - rs[-2] <= 1e-12 * abs(rs[-1]):
            # corner: the two edges adjacent to the vertex hit by y
            j = int(np.argsort(r)[-2])
            a, b = (k, j) if (j - k) % len(V) == 1 else (j, k)
            ta, tb = T[a] / np.hypot(*T[a]), T[b] / np.hypot(*T[b])
            return NormalLine(_orient(y, ta + tb), True)
        return NormalLine(_orient(y, T[k]), False)
    # generic norm: one-sided tangential derivatives of F at y
    Ly = math.hypot(*y)
    e = y / Ly
    v = _perp(e)
    h = 1e-6 * Ly
    F0 = float(F(y))
    dp = (float(F(y + h * v)) - F0) / h
    dm = (F0 - float(F(y - h * v))) / h
    g_rad = F0 / Ly
    wp = _orient(y, _perp(g_rad * e + dp * v))
    wm = _orient(y, _perp(g_rad * e + dm * v))
    fan = abs(dp - dm) > 1e-4 * max(1.0, abs(g_rad))
    return NormalLine(_orient(y, wp + wm), bool(fan))


def zeta(F: Norm2D, y) -> float:
    """Hypersurface density factor at the direction y (n = 2).

    With ``b2 = normal_line(F, y)``: ``(pi/2) len(B_y^1) / (F(y) area(B^2))``
    where B^2 is the unit ball in the frame ``(y, b2)``, which equals
    ``pi |y x b2| / (F(y) F(b2) area(B_F))``.
    """
    y = np.asarray(y, dtype=float)
    b2 = normal_line(F, y).direction
    len1 = 2.0 / float(F(b2))
    area2 = F.area() / abs(float(_cross(y, b2)))
    return C2 * len1 / (float(F(y)) * area2)


def zeta_bounds(n: int = 2):
    """``(2^-n c_n, 2^n c_n)``; for n = 2 this is ``(pi/8, 2 pi)``."""
    if n != 2:
        raise ValueError("only n = 2 is supported")
    return C2 / 4, 4 * C2


# -- hypersurface measure ------------------------------------------------------------------

def _tangent_zeta(body: ConvexBody, xm: np.ndarray, Sm: Optional[np.ndarray], D: np.ndarray,
                  dS: Optional[np.ndarray]):
    """zeta of the normal of a tangent D at many points, and F(D)."""
    if Sm is not None:
        ln = _polygon_norms(body, Sm)
        dz = chart_coords(ln.chart, dS)
        cr = np.max(_cross(dz[:, None, :], ln.vertices), axis=1)
        area = math.pi * np.abs(np.linalg.det(ln.frame)) / ln.density
        Fd = norm_from_slacks(Sm, dS)
        return math.pi * cr / (Fd * area), Fd
    ln = local_norms(body, PointBatch(xm))
    if ln.metric is not None:
        G = ln.metric
        P = _perp(D)
        dual = np.sqrt(np.einsum("ki,ki->k", P, np.linalg.solve(G, P[..., None])[..., 0]))
        Fd = np.sqrt(np.einsum("ki,kij,kj->k", D, G, D))
        return dual * np.sqrt(np.linalg.det(G)) / Fd, Fd
    cr = np.max(_cross(D[:, None, :], ln.vertices), axis=1)
    Fd = norms(body, xm, D)
    return cr * ln.density / Fd, Fd


@dataclass(frozen=True)
class HypersurfaceMeasure:
    """Induced measure of a polyline.

    ``length`` holds the Hilbert length of each segment, ``density`` the
    length-weighted mean of zeta(n) * phi on it; ``total = sum(length * density)``.
    """

    curve: np.ndarray
    length: np.ndarray
    density: np.ndarray
    total: float

    @property
    def plain_total(self) -> float:
        return float(np.sum(self.length))


def _hm_level(body, P, S, level, phi):
    k = 1 << level
    lam = np.arange(k + 1) / k
    a, b = P[:-1], P[1:]
    X = a[:, None, :] + lam[None, :, None] * (b - a)[:, None, :]  # (seg, k+1, 2)
    Xm = 0.5 * (X[:, 1:] + X[:, :-1])
    D = (b - a)[:, None, :] / k
    nseg = len(a)
    if S is not None:
        # convex combinations keep the relative precision of tiny slacks
        Sx = (1 - lam)[None, :, None] * S[:-1, None, :] + lam[None, :, None] * S[1:, None, :]
        d = distance_from_slacks(Sx[:, :-1], Sx[:, 1:])
        Sm = 0.5 * (Sx[:, 1:] + Sx[:, :-1])
        dS = np.broadcast_to(((S[1:] - S[:-1]) / k)[:, None, :], Sm.shape)
        z, _ = _tangent_zeta(body, Xm.reshape(-1, 2), Sm.reshape(-1, S.shape[1]), None,
                             dS.reshape(-1, S.shape[1]))
    else:
        d = distances(body, X[:, :-1], X[:, 1:])
        z, _ = _tangent_zeta(body, Xm.reshape(-1, 2), None,
                             np.broadcast_to(D, Xm.shape).reshape(-1, 2), None)
    z = z.reshape(nseg, k)
    w = z if phi is None else z * np.asarray(phi(Xm.reshape(-1, 2)), dtype=float).reshape(nseg, k)
    seg_len = d.sum(1)
    seg_meas = (w * d).sum(1)
    return seg_len, seg_meas


def hypersurface_measure(body: ConvexBody, curve, density: Optional[Callable] = None,
                         closed: bool = False, slack=None, rtol: float = 1e-6,
                         max_level: int = 8) -> HypersurfaceMeasure:
    """Induced measure ``phi * zeta(n) * (Hilbert length)`` of a polyline.

    ``density`` is the density phi of the ambient measure relative to the
    Hilbert measure (None means phi = 1, i.e. the Hilbert measure itself).
    Each segment is split into ``2**k`` geodesic pieces, each weighted at its
    midpoint, k growing until the totals agree to ``rtol``.
    """
    P, S = _polyline_data(body, curve, slack, closed)
    if len(P) < 2:
        return HypersurfaceMeasure(P, np.zeros(0), np.zeros(0), 0.0)
    if S is None and not np.all(is_interior(body, P)):
        raise NotInteriorError("curve leaves the body interior")
    if S is not None and np.any(S <= 0):
        raise NotInteriorError("curve leaves the body interior")
    keep = np.hypot(*(P[1:] - P[:-1]).T) > 0
    idx = np.concatenate([[True], keep])
    P = P[idx]
    S = None if S is None else S[idx]
    seg_len, seg_meas = _hm_level(body, P, S, 0, density)
    for level in range(1, max_level + 1):
        L2, M2 = _hm_level(body, P, S, level, density)
        done = abs(M2.sum() - seg_meas.sum()) <= rtol * abs(M2.sum())
        seg_len, seg_meas = L2, M2
        if done:
            break
    dens = np.where(seg_len > 0, seg_meas / np.where(seg_len > 0, seg_len, 1.0), 0.0)
    return HypersurfaceMeasure(P, seg_len, dens, float(seg_meas.sum()))


# -- gradient ------------------------------------------------------------------------------

def finsler_gradient(F: Norm2D, df) -> np.ndarray:
    """Vector X with ``F(X) = F*(df)`` and ``df(X) = F*(df)^2``."""
    df = np.asarray(df, dtype=float)
    if not np.any(df):
        return np.zeros(2)
    val, arg = F.dual(df)
    return val * np.asarray(arg)


# -- co-area ----------------------------------------------------------------------------------

def distance_field(body: ConvexBody, x) -> Callable:
    """``y -> d(x, y)`` as a vectorised scalar field."""
    x = require_interior(body, x)
    if body.is_polygon:
        sx = point_batch(body, x[None]).slack[0]

        def f(y):
            return distance_from_slacks(sx, point_batch(body, np.asarray(y).reshape(-1, 2)).slack)
        return f

    def f(y):
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        return distances(body, np.broadcast_to(x, y.shape), y)
    return f


class CoareaResult(NamedTuple):
    lhs: float
    rhs: float
    rel_gap: float
    levels: np.ndarray
    level_measures: np.ndarray


class ContourError(RuntimeError):
    pass


def _snap(f, t, a, b, iters: int = 50):
    """Bisection for ``f = t`` on the segments [a, b] (vectorised)."""
    fa = f(a) - t
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m) - t
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left[:, None], m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left[:, None], b, m)
    return 0.5 * (a + b)


def level_curves(body: ConvexBody, f: Callable, t: float, cell: float, snap: bool = True):
    """Closed level curves ``{f = t}`` by marching squares on the cell-centre grid.

    Marching squares interpolates linearly along grid edges; with ``snap`` each
    vertex is then moved to the exact crossing on its grid edge by bisection.
    """
    xs, ys, _, inside = grid_density(body, cell)
    F = _grid_values(body, f, cell)
    curves = []
    for c in find_contours(F, t, mask=inside):
        if len(c) < 4 or not np.allclose(c[0], c[-1]):
            raise ContourError(f"level set {t} is not a closed curve inside the grid")
        c = c[:-1]
        xy = np.stack([xs[0] + cell * c[:, 1], ys[0] + cell * c[:, 0]], 1)
        if snap:
            on_row = np.abs(c[:, 0] - np.round(c[:, 0])) < 1e-9
            r0 = np.where(on_row, np.round(c[:, 0]), np.floor(c[:, 0]))
            c0 = np.where(on_row, np.floor(c[:, 1]), np.round(c[:, 1]))
            r1 = np.where(on_row, r0, r0 + 1)
            c1 = np.where(on_row, c0 + 1, c0)
            a = np.stack([xs[0] + cell * c0, ys[0] + cell * r0], 1)
            b = np.stack([xs[0] + cell * c1, ys[0] + cell * r1], 1)
            xy = _snap(f, t, a, b)
        curves.append(xy)
    return curves


_FIELD_CACHE: dict = {}


def _grid_values(body, f, cell):
    key = (id(body), id(f), float(cell))
    if key not in _FIELD_CACHE:
        _FIELD_CACHE.clear()
        xs, ys, _, inside = grid_density(body, cell)
        X, Y = np.meshgrid(xs, ys)
        pts = np.stack([X[inside], Y[inside]], 1)
        F = np.full(X.shape, np.nan)
        F[inside] = f(pts)
        _FIELD_CACHE[key] = (f, F)
    return _FIELD_CACHE[key][1]


def coarea_check(body: ConvexBody, f: Callable, phi: Optional[Callable], t_range, n_levels: int = 33,
                 cell: Optional[float] = None) -> CoareaResult:
    """Both sides of the co-area formula on the band ``t0 <= f <= t1``.

    lhs: grid midpoint rule for ``int phi F*(df) dmu``, df by central differences
    with step cell/2. rhs: trapezoid rule in t of the induced measure (weight
    phi) of the level curves traced by marching squares.

    The default cell is diameter/200, halved (at most twice) when a level curve
    comes too close to the boundary to be closed on the grid; an explicit cell
    is used as given.
    """
    if cell:
        return _coarea(body, f, phi, t_range, n_levels, float(cell))
    cell = body.diameter / 200
    for _ in range(2):
        try:
            return _coarea(body, f, phi, t_range, n_levels, cell)
        except ContourError:
            cell /= 2
    return _coarea(body, f, phi, t_range, n_levels, cell)


def _coarea(body, f, phi, t_range, n_levels, cell) -> CoareaResult:
    t0, t1 = map(float, t_range)
    xs, ys, h, inside = grid_density(body, cell)
    F = _grid_values(body, f, cell)
    band = inside & (F >= t0) & (F <= t1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X[band], Y[band]], 1)
    lhs = 0.0
    if len(pts):
        e = 0.5 * cell
        gx = (f(pts + [e, 0]) - f(pts - [e, 0])) / cell
        gy = (f(pts + [0, e]) - f(pts - [0, e])) / cell
        g = np.stack([gx, gy], 1)
        ln = local_norms(body, point_batch(body, pts))
        gf = np.einsum("kji,kj->ki", np.linalg.inv(ln.frame), g)  # covector in frame coordinates
        dual, _ = ln.dual(gf)
        w = h[band] * dual
        if phi is not None:
            w = w * np.asarray(phi(pts), dtype=float)
        lhs = float(np.sum(w) * cell * cell)
    levels = np.linspace(t0, t1, n_levels)
    meas = np.zeros(n_levels)
    for k, t in enumerate(levels):
        for c in level_curves(body, f, t, cell):
            meas[k] += hypersurface_measure(body, c, phi, closed=True, rtol=1e-4, max_level=3).total
    rhs = float(np.trapezoid(meas, levels))
    gap = abs(lhs - rhs) / abs(rhs) if rhs != 0 else (0.0 if lhs == 0 else math.inf)
    return CoareaResult(lhs, rhs, gap, levels, meas)


class SphereArea(NamedTuple):
    area: float
    volume_derivative: float

    @property
    def rel_gap(self) -> float:
        return abs(self.area - self.volume_derivative) / max(abs(self.volume_derivative), 1e-300)


def sphere_area_derivative(body: ConvexBody, x, rho: float, eps: float = 1e-3,
                           n_dir: int = 1024) -> SphereArea:
    """Induced measure of the metric sphere ``S(x, rho)`` next to
    ``(mu(B_{rho+eps}) - mu(B_rho)) / eps``."""
    ball = metric_ball(body, x, rho, n_dir)
    area = hypersurface_measure(body, ball).total
    v0 = ball_volume(body, x, rho).value
    v1 = ball_volume(body, x, rho + eps).value
    return SphereArea(area, (v1 - v0) / eps)
