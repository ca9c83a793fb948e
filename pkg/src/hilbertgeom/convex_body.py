"""Planar convex bodies and the exact geometric primitives built on them.

Three kinds are supported: convex polygons, ellipses and polygons with
circular corner arcs. Bodies are frozen dataclasses, so they hash and can be
shared freely between workers.

Polygon bodies also expose their edges as half-planes ``n_l . p <= c_l``.
The *slack* of a point, ``s_l(p) = c_l - n_l . p``, is its Euclidean distance to
edge line ``l``. Several modules carry slacks alongside coordinates because
slacks stay accurate for points far closer to the boundary than float64
coordinates can resolve.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

BOUNDARY_TOL = 1e-9

INSIDE, BOUNDARY, OUTSIDE = "inside", "boundary", "outside"


class BodyError(ValueError):
    """Invalid body description; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class NotInteriorError(ValueError):
    pass


def _as_points(p) -> np.ndarray:
    return np.asarray(p, dtype=float)


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _check_polygon(vertices, field="vertices") -> np.ndarray:
    try:
        V = np.asarray(vertices, dtype=float)
    except (TypeError, ValueError):
        raise BodyError(field, "vertex list must contain numeric pairs") from None
    if V.ndim != 2 or V.shape[1] != 2:
        raise BodyError(field, "vertex list must contain [x, y] pairs")
    if len(V) < 3:
        raise BodyError(field, "at least 3 vertices are required")
    if not np.all(np.isfinite(V)):
        raise BodyError(field, "coordinates must be finite")
    e = np.roll(V, -1, axis=0) - V
    if np.any(np.hypot(e[:, 0], e[:, 1]) == 0):
        raise BodyError(field, "repeated vertex")
    turn = _cross(e, np.roll(e, -1, axis=0))
    scale = np.hypot(e[:, 0], e[:, 1])
    rel = turn / (scale * np.roll(scale, -1))
    if np.any(np.abs(rel) <= 1e-12):
        raise BodyError(field, "collinear vertices")
    if np.all(rel < 0):
        raise BodyError(field, "vertices must be listed counterclockwise")
    if np.any(rel < 0):
        raise BodyError(field, "non-convex vertex list")
    # all left turns; reject polygons that wind more than once
    ang = np.arctan2(e[:, 1], e[:, 0])
    total = np.sum(np.mod(np.roll(ang, -1) - ang, 2 * np.pi))
    if abs(total - 2 * np.pi) > 1e-6:
        raise BodyError(field, "non-convex vertex list (self-intersecting)")
    return V


@dataclass(frozen=True)
class ConvexBody:
    """Bounded open convex set in the plane.

    Use the ``polygon``, ``ellipse`` and ``rounded_polygon`` constructors; they
    validate their input. ``vertices`` holds the polygon (or the base polygon of
    a rounded body) counterclockwise.
    """

    kind: str
    vertices: tuple = ()
    center: tuple = (0.0, 0.0)
    axes: tuple = (1.0, 1.0)
    angle: float = 0.0
    corner_radius: float = 0.0

    # -- constructors -------------------------------------------------------
    @classmethod
    def polygon(cls, vertices) -> "ConvexBody":
        V = _check_polygon(vertices)
        return cls("polygon", vertices=tuple(map(tuple, V.tolist())))

    @classmethod
    def ellipse(cls, center=(0.0, 0.0), axes=(1.0, 1.0), angle: float = 0.0) -> "ConvexBody":
        try:
            c = tuple(float(x) for x in center)
            ax = tuple(float(x) for x in axes)
            t = float(angle)
        except (TypeError, ValueError):
            raise BodyError("ellipse", "center, axes and angle must be numeric") from None
        if len(c) != 2 or not all(map(math.isfinite, c)):
            raise BodyError("center", "must be a finite [x, y] pair")
        if len(ax) != 2 or not all(map(math.isfinite, ax)):
            raise BodyError("axes", "must be a finite [a, b] pair")
        if min(ax) <= 0:
            raise BodyError("axes", "semi-axes must be strictly positive (degenerate ellipse)")
        if not math.isfinite(t):
            raise BodyError("angle", "must be finite")
        return cls("ellipse", center=c, axes=ax, angle=t)

    @classmethod
    def disk(cls, radius: float = 1.0, center=(0.0, 0.0)) -> "ConvexBody":
        return cls.ellipse(center, (radius, radius), 0.0)

    @classmethod
    def rounded_polygon(cls, vertices, corner_radius: float) -> "ConvexBody":
        V = _check_polygon(vertices)
        try:
            r = float(corner_radius)
        except (TypeError, ValueError):
            raise BodyError("corner_radius", "must be numeric") from None
        if not (r > 0 and math.isfinite(r)):
            raise BodyError("corner_radius", "must be a positive finite number")
        e = np.roll(V, -1, axis=0) - V
        L = np.hypot(e[:, 0], e[:, 1])
        if r >= 0.5 * L.min():
            raise BodyError("corner_radius", "rounding radius too large: must be below half the shortest edge")
        body = cls("rounded_polygon", vertices=tuple(map(tuple, V.tolist())), corner_radius=r)
        tan = body._tangent_lengths
        if np.any(tan + np.roll(tan, -1) > L * (1 + 1e-12)):
            raise BodyError("corner_radius", "rounding radius too large: corner arcs overlap on an edge")
        return body

    # -- polygon data -------------------------------------------------------
    @cached_property
    def V(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @cached_property
    def _edges(self):
        V = self.V
        e = np.roll(V, -1, axis=0) - V
        L = np.hypot(e[:, 0], e[:, 1])
        t = e / L[:, None]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        c = np.einsum("ij,ij->i", n, V)
        return t, n, c, L

    @property
    def normals(self) -> np.ndarray:
        """Outward unit edge normals; edge ``l`` joins vertex ``l`` to ``l+1``."""
        return self._edges[1]

    @property
    def offsets(self) -> np.ndarray:
        return self._edges[2]

    @cached_property
    def vertex_slacks(self) -> np.ndarray:
        """Slack table ``S[k, l]`` of vertex k against edge l, exact zeros on incident edges."""
        if self.kind != "polygon":
            raise TypeError("slacks are defined for polygon bodies only")
        S = self.offsets[None, :] - self.V @ self.normals.T
        m = len(self.V)
        k = np.arange(m)
        S[k, k] = 0.0
        S[k, (k - 1) % m] = 0.0
        return S

    @cached_property
    def _tangent_lengths(self) -> np.ndarray:
        # corner k: interior angle phi_k between edges k-1 and k
        t = self._edges[0]
        cosphi = -np.einsum("ij,ij->i", np.roll(t, 1, axis=0), t)
        phi = np.arccos(np.clip(cosphi, -1, 1))
        return self.corner_radius / np.tan(phi / 2)

    @cached_property
    def _arcs(self):
        """Arc centres, tangent points on the incoming/outgoing edges, for rounded bodies."""
        t, n, _, _ = self._edges
        V = self.V
        tau = self._tangent_lengths
        t_in = np.roll(t, 1, axis=0)
        T_in = V - tau[:, None] * t_in
        T_out = V + tau[:, None] * t
        q = T_out - self.corner_radius * n
        return q, T_in, T_out

    @property
    def is_polygon(self) -> bool:
        return self.kind == "polygon"

    # -- general geometry ---------------------------------------------------
    @cached_property
    def _ellipse_frame(self):
        ct, st = math.cos(self.angle), math.sin(self.angle)
        Rot = np.array([[ct, -st], [st, ct]])
        return np.asarray(self.center), Rot, np.asarray(self.axes)

    def _to_unit(self, p):
        c, Rot, ax = self._ellipse_frame
        return ((p - c) @ Rot) / ax

    def boundary_points(self, n: int = 512) -> np.ndarray:
        """Counterclockwise sample of the boundary; polygon corners are always included."""
        if self.kind == "ellipse":
            c, Rot, ax = self._ellipse_frame
            th = 2 * np.pi * np.arange(n) / n
            u = np.stack([ax[0] * np.cos(th), ax[1] * np.sin(th)], axis=1)
            return c + u @ Rot.T
        if self.kind == "polygon":
            return _resample_closed(self.V, n)
        q, T_in, T_out = self._arcs
        r = self.corner_radius
        perim = self.perimeter
        pts = []
        m = len(self.V)
        nrm = self.normals
        for k in range(m):
            a0 = math.atan2(nrm[k - 1, 1], nrm[k - 1, 0])
            a1 = math.atan2(nrm[k, 1], nrm[k, 0])
            da = (a1 - a0) % (2 * np.pi)
            na = max(2, int(math.ceil(n * r * da / perim)))
            a = a0 + da * np.arange(na) / na
            pts.append(q[k] + r * np.stack([np.cos(a), np.sin(a)], axis=1))
            seg = T_in[(k + 1) % m] - T_out[k]
            ns = max(1, int(math.ceil(n * np.hypot(*seg) / perim)))
            pts.append(T_out[k] + np.arange(ns)[:, None] / ns * seg)
        return np.concatenate(pts)

    @cached_property
    def perimeter(self) -> float:
        if self.kind == "polygon":
            return float(self._edges[3].sum())
        if self.kind == "rounded_polygon":
            L = self._edges[3]
            tau = self._tangent_lengths
            flat = L - tau - np.roll(tau, -1)
            return float(flat.sum() + 2 * np.pi * self.corner_radius)
        P = self.boundary_points(4096)
        d = np.roll(P, -1, axis=0) - P
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    @cached_property
    def area(self) -> float:
        if self.kind == "ellipse":
            return math.pi * self.axes[0] * self.axes[1]
        P = self.V
        a = 0.5 * _cross(P, np.roll(P, -1, axis=0)).sum()
        if self.kind == "polygon":
            return float(a)
        # Q + B_r for the inner offset polygon Q with vertices at the arc centres
        q = self._arcs[0]
        aq = 0.5 * _cross(q, np.roll(q, -1, axis=0)).sum()
        dq = np.roll(q, -1, axis=0) - q
        return float(aq + self.corner_radius * np.hypot(dq[:, 0], dq[:, 1]).sum() + math.pi * self.corner_radius**2)

    @cached_property
    def centroid(self) -> np.ndarray:
        if self.kind == "ellipse":
            return np.asarray(self.center, dtype=float)
        P = self.V if self.kind == "polygon" else self.boundary_points(8192)
        return polygon_centroid(P)

    @cached_property
    def diameter(self) -> float:
        P = self.V if self.kind == "polygon" else self.boundary_points(2048)
        d = P[:, None, :] - P[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    @cached_property
    def bbox(self) -> np.ndarray:
        if self.kind == "ellipse":
            c, Rot, ax = self._ellipse_frame
            h = np.sqrt((Rot**2) @ (ax**2))
            return np.array([c - h, c + h])
        P = self.V if self.kind == "polygon" else self.boundary_points(2048)
        lo, hi = P.min(0), P.max(0)
        if self.kind == "rounded_polygon":
            pad = 1e-3 * self.corner_radius
            lo, hi = lo - pad, hi + pad
        return np.array([lo, hi])

    def to_dict(self) -> dict:
        if self.kind == "ellipse":
            return {"kind": "ellipse", "center": list(self.center), "axes": list(self.axes), "angle": self.angle}
        d = {"kind": self.kind, "vertices": [list(v) for v in self.vertices]}
        if self.kind == "rounded_polygon":
            d["corner_radius"] = self.corner_radius
        return d


def polygon_centroid(P: np.ndarray) -> np.ndarray:
    Q = np.roll(P, -1, axis=0)
    w = _cross(P, Q)
    A = w.sum() / 2
    return ((P + Q) * w[:, None]).sum(0) / (6 * A)


def polygon_area(P: np.ndarray) -> float:
    """Signed shoelace area (positive for counterclockwise order)."""
    P = np.asarray(P, dtype=float)
    return float(0.5 * _cross(P, np.roll(P, -1, axis=0)).sum())


def _resample_closed(V: np.ndarray, n: int) -> np.ndarray:
    e = np.roll(V, -1, axis=0) - V
    L = np.hypot(e[:, 0], e[:, 1])
    out = []
    for k in range(len(V)):
        ns = max(1, int(math.ceil(n * L[k] / L.sum())))
        out.append(V[k] + np.arange(ns)[:, None] / ns * e[k])
    return np.concatenate(out)


# -- parsing --------------------------------------------------------------------

def parse_body(text: str) -> ConvexBody:
    """Parse a JSON body description and validate it."""
    try:
        d = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise BodyError("syntax", f"malformed JSON ({exc})") from None
    return body_from_dict(d)


def body_from_dict(d) -> ConvexBody:
    if not isinstance(d, dict):
        raise BodyError("syntax", "top level must be a JSON object")
    kind = d.get("kind")
    if kind == "polygon":
        if "vertices" not in d:
            raise BodyError("vertices", "missing")
        return ConvexBody.polygon(d["vertices"])
    if kind == "ellipse":
        for key in ("center", "axes"):
            if key not in d:
                raise BodyError(key, "missing")
        return ConvexBody.ellipse(d["center"], d["axes"], d.get("angle", 0.0))
    if kind == "rounded_polygon":
        for key in ("vertices", "corner_radius"):
            if key not in d:
                raise BodyError(key, "missing")
        return ConvexBody.rounded_polygon(d["vertices"], d["corner_radius"])
    raise BodyError("kind", f"unknown body kind {kind!r}")


def dump_body(body: ConvexBody) -> str:
    return json.dumps(body.to_dict())


# -- containment ----------------------------------------------------------------

def signed_boundary_distance(body: ConvexBody, p) -> np.ndarray:
    """Signed Euclidean distance to the boundary, negative inside (approximate for ellipses)."""
    p = _as_points(p)
    if body.kind == "polygon":
        s = body.offsets - p @ body.normals.T
        inside = np.all(s > 0, axis=-1)
        d_in = -s.min(axis=-1)
        return np.where(inside, d_in, _polygon_outside_distance(body.V, p))
    if body.kind == "ellipse":
        c, Rot, ax = body._ellipse_frame
        u = body._to_unit(p)
        r = np.hypot(u[..., 0], u[..., 1])
        # first-order distance estimate g/|grad g| with g = |u| - 1
        safe = np.where(r > 0, r, 1.0)
        gu = u / safe[..., None] / ax
        g = np.hypot(gu[..., 0], gu[..., 1])
        g = np.where(r > 0, g, 1.0)
        return np.where(r > 0, (r - 1) / g, -min(ax))
    # rounded: distance to the arc-centre polygon minus the radius
    q = body._arcs[0]
    nq = body.normals
    cq = np.einsum("ij,ij->i", nq, q)
    s = cq - p @ nq.T
    inside = np.all(s >= 0, axis=-1)
    d_q = np.where(inside, -s.min(axis=-1), _polygon_outside_distance(q, p))
    return d_q - body.corner_radius


def _polygon_outside_distance(V, p):
    a = V
    b = np.roll(V, -1, axis=0)
    ab = b - a
    ap = p[..., None, :] - a
    t = np.clip(np.einsum("...ij,ij->...i", ap, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    d = ap - t[..., None] * ab
    return np.sqrt((d**2).sum(-1)).min(-1)


def contains(body: ConvexBody, p, tol: float = BOUNDARY_TOL):
    """Classify a point (or an array of points) as inside, boundary or outside."""
    p = _as_points(p)
    if body.kind == "polygon":
        V = body.V
        e = np.roll(V, -1, axis=0) - V
        cr = _cross(e, p[..., None, :] - V)
        code = np.where(np.all(cr > 0, -1), 0, np.where(np.any(cr < 0, -1), 2, 1))
    else:
        d = signed_boundary_distance(body, p)
        code = np.where(d < -tol, 0, np.where(d > tol, 2, 1))
    labels = np.array([INSIDE, BOUNDARY, OUTSIDE])
    out = labels[code]
    return str(out) if out.ndim == 0 else out


def is_interior(body: ConvexBody, p, tol: float = BOUNDARY_TOL) -> np.ndarray:
    p = _as_points(p)
    if body.kind == "polygon":
        return np.all(body.offsets - p @ body.normals.T > 0, axis=-1)
    return signed_boundary_distance(body, p) < -tol


def require_interior(body: ConvexBody, p, what: str = "point") -> np.ndarray:
    p = _as_points(p)
    if not np.all(is_interior(body, p)):
        raise NotInteriorError(f"{what} is not strictly interior to the body")
    return p


# -- rays and chords --------------------------------------------------------------

def ray_exit(body: ConvexBody, p, d) -> np.ndarray:
    """Distance parameter ``t > 0`` with ``p + t d`` on the boundary (vectorised, p interior)."""
    p = _as_points(p)
    d = _as_points(d)
    p, d = np.broadcast_arrays(p, d)
    if body.kind == "polygon":
        n, c = body.normals, body.offsets
        nd = d @ n.T
        sl = c - p @ n.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(nd > 0, sl / nd, np.inf)
        return t.min(-1)
    if body.kind == "ellipse":
        c, Rot, ax = body._ellipse_frame
        u = body._to_unit(p)
        v = (d @ Rot) / ax
        A = (v**2).sum(-1)
        B = (u * v).sum(-1)
        C = (u**2).sum(-1) - 1.0
        disc = np.sqrt(np.maximum(B * B - A * C, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(B >= 0, -C / (B + disc), (disc - B) / A)
    return _rounded_exit(body, p, d)


def _rounded_exit(body: ConvexBody, p, d):
    t_e, n, c, L = body._edges
    q, T_in, T_out = body._arcs
    r = body.corner_radius
    tau = body._tangent_lengths
    tol = 1e-12 * max(1.0, body.diameter)
    # flat edges
    nd = d @ n.T
    sl = c - p @ n.T
    with np.errstate(divide="ignore", invalid="ignore"):
        te = np.where(nd > 0, sl / nd, np.inf)
    hit = p[..., None, :] + np.where(np.isfinite(te), te, 0.0)[..., None] * d[..., None, :]
    along = np.einsum("...ij,ij->...i", hit - body.V, t_e)
    lo, hi = tau, L - np.roll(tau, -1)
    viol_e = np.maximum(lo - along, along - hi)
    # corner arcs: largest root of |p + t d - q_k|^2 = r^2
    w = p[..., None, :] - q
    A = (d**2).sum(-1)[..., None]
    B = np.einsum("...ij,...j->...i", w, d)
    C = (w**2).sum(-1) - r * r
    disc = B * B - A * C
    sq = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(B >= 0, -C / (B + sq), (sq - B) / A)
        ta = np.where(disc >= 0, ta, np.inf)
    ta_f = np.where(np.isfinite(ta), ta, 0.0)
    v = (p[..., None, :] + ta_f[..., None] * d[..., None, :] - q) / r
    n_in = np.roll(n, 1, axis=0)
    viol_a = np.maximum(-_cross(n_in, v), -_cross(v, n))
    t_all = np.concatenate([te, ta], axis=-1)
    viol = np.concatenate([viol_e, viol_a], axis=-1)
    ok = (viol <= tol) & np.isfinite(t_all) & (t_all > 0)
    t_ok = np.where(ok, t_all, np.inf).min(-1)
    # fallback for rays where rounding rejected every candidate
    bad = ~np.isfinite(t_ok)
    if np.any(bad):
        pen = np.where(np.isfinite(t_all) & (t_all > 0), viol, np.inf)
        k = np.argmin(pen, axis=-1)
        t_fb = np.take_along_axis(t_all, k[..., None], -1)[..., 0]
        t_ok = np.where(bad, t_fb, t_ok)
    return t_ok


class Chord(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    direction: np.ndarray


def chord(body: ConvexBody, p, direction) -> Chord:
    """Boundary hits of the line through interior ``p``; ``a`` lies on the ``-direction`` side."""
    p = require_interior(body, p)
    d = _as_points(direction)
    nrm = float(np.hypot(*d))
    if nrm == 0:
        raise ValueError("direction must be nonzero")
    u = d / nrm
    tp = float(ray_exit(body, p, u))
    tm = float(ray_exit(body, p, -u))
    return Chord(p - tm * u, p + tp * u, u)


# -- transformations --------------------------------------------------------------

def homothety(body: ConvexBody, center, factor: float) -> ConvexBody:
    """Image of the body under ``x -> center + factor (x - center)``."""
    factor = float(factor)
    if not factor > 0:
        raise ValueError("homothety factor must be positive")
    c = np.asarray(center, dtype=float)
    if factor == 1.0:
        return body
    if body.kind == "ellipse":
        ctr = c + factor * (np.asarray(body.center) - c)
        return ConvexBody.ellipse(ctr, (factor * body.axes[0], factor * body.axes[1]), body.angle)
    V = c + factor * (body.V - c)
    if body.kind == "polygon":
        return ConvexBody.polygon(V)
    return ConvexBody.rounded_polygon(V, factor * body.corner_radius)


def affine_image(body: ConvexBody, A, b) -> ConvexBody:
    """Image under ``x -> A x + b``. Rounded bodies only map under similarities."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    det = float(np.linalg.det(A))
    if abs(det) < 1e-14:
        raise ValueError("affine map must be invertible")
    if body.kind in ("polygon", "rounded_polygon"):
        V = body.V @ A.T + b
        if det < 0:
            V = V[::-1]
        if body.kind == "polygon":
            return ConvexBody.polygon(V)
        s = np.linalg.svd(A, compute_uv=False)
        if abs(s[0] - s[1]) > 1e-12 * s[0]:
            raise ValueError("rounded polygons map only under similarities")
        return ConvexBody.rounded_polygon(V, s[0] * body.corner_radius)
    c, Rot, ax = body._ellipse_frame
    # x = c + Rot diag(ax) u with |u| <= 1  ->  M = A Rot diag(ax)
    M = A @ Rot @ np.diag(ax)
    U, s, _ = np.linalg.svd(M)
    if np.linalg.det(U) < 0:
        U[:, 1] *= -1
    return ConvexBody.ellipse(A @ c + b, tuple(s), math.atan2(U[1, 0], U[0, 0]))


class Smoothing(NamedTuple):
    body: ConvexBody
    rho: float


def smooth_polygon(body: ConvexBody, corner_radius: float) -> Smoothing:
    """Round every corner with a tangent circular arc.

    Returns the rounded body together with the smallest ``rho`` (relative to
    centroid homotheties) such that ``(1-rho) body`` lies inside the rounded body.
    The rounded body is always inside the polygon, hence inside ``(1+rho) body``.
    """
    if body.kind != "polygon":
        raise BodyError("kind", "smoothing applies to polygon bodies")
    out = ConvexBody.rounded_polygon(body.V, corner_radius)
    g = body.centroid
    dirs = body.V - g
    t = ray_exit(out, np.broadcast_to(g, dirs.shape), dirs)
    rho = float(np.max(1.0 - t))
    return Smoothing(out, max(rho, 0.0))


def hausdorff_gap(a: ConvexBody, b: ConvexBody, n: int = 2048) -> float:
    """Symmetric Hausdorff distance between two bodies' boundaries (sampled)."""
    pa, pb = a.boundary_points(n), b.boundary_points(n)
    da = np.abs(signed_boundary_distance(b, pa)).max()
    db = np.abs(signed_boundary_distance(a, pb)).max()
    return float(max(da, db))
