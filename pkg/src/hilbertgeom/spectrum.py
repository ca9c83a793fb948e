"""Rayleigh quotients of piecewise-linear functions and estimates of the bottom
of the spectrum.

Every triangle is handled in the frame of its midpoint's tangent norm (for
polygon bodies the slack chart, see ``measure``): the PL gradient, the dual
norm and the weight ``h(mid) * area_e(T)`` are all computed there, so the
quadrature keeps its accuracy on triangles lying very close to a corner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import triangle as tr
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh, splu

from .convex_body import ConvexBody, homothety, is_interior, smooth_polygon
from .hilbert_metric import PointBatch, distance_from_slacks, distances, ordered_fan, point_batch
from .measure import Region, chart_coords, local_norms, make_region


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with ccw triangles; ``slack`` holds exact vertex slacks for polygon bodies."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    slack: Optional[np.ndarray] = None

    @property
    def n_interior(self) -> int:
        return int(np.sum(~self.boundary))

    @property
    def edges(self) -> np.ndarray:
        T = self.triangles
        E = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        return np.unique(np.sort(E, axis=1), axis=0)

    @property
    def h(self) -> float:
        E = self.edges
        d = self.vertices[E[:, 1]] - self.vertices[E[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).max())

    def angles(self) -> np.ndarray:
        """Interior angles (radians), shape (n_tri, 3)."""
        P = self.vertices[self.triangles]
        out = []
        for i in range(3):
            a = P[:, (i + 1) % 3] - P[:, i]
            b = P[:, (i + 2) % 3] - P[:, i]
            c = np.einsum("ij,ij->i", a, b) / (np.hypot(*a.T) * np.hypot(*b.T))
            out.append(np.arccos(np.clip(c, -1, 1)))
        return np.stack(out, 1)

    def batch(self) -> PointBatch:
        return PointBatch(self.vertices, self.slack)


@dataclass(frozen=True, eq=False)
class PLFunction:
    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        if len(self.values) != len(self.mesh.vertices):
            raise ValueError("one value per mesh vertex is required")


@dataclass(frozen=True, eq=False)
class SpectralEstimate:
    """``lambda_`` is the Rayleigh quotient of ``minimizer``."""

    lambda_: float
    minimizer: PLFunction
    restarts_used: int
    converged: bool
    mesh_h: float
    iterations: int = 0


# -- meshing -------------------------------------------------------------------------------

def _refine_boundary(P: np.ndarray, h: float) -> np.ndarray:
    out = []
    Q = np.roll(P, -1, axis=0)
    for a, b in zip(P, Q):
        k = max(1, int(math.ceil(np.hypot(*(b - a)) / h)))
        t = np.arange(k)[:, None] / k
        out.append(a + t * (b - a))
    return np.concatenate(out)


def triangulate(body: ConvexBody, region: Region, h: float) -> Mesh:
    """Constrained Delaunay mesh of the region with edges at most h and angles at least 20 degrees."""
    if not h > 0:
        raise MeshError("target edge length must be positive")
    P = region.boundary
    diam = float(np.max(np.hypot(*(P[:, None] - P[None]).reshape(-1, 2).T)))
    if h > diam:
        raise MeshError("target edge length exceeds the region diameter")
    B = _refine_boundary(P, h)
    n = len(B)
    seg = np.stack([np.arange(n), (np.arange(n) + 1) % n], 1)
    area = 0.3 * h * h
    for _ in range(8):
        out = tr.triangulate({"vertices": B, "segments": seg}, f"pq20a{area:.17f}Q")
        V, T = out["vertices"], out["triangles"]
        d = V[np.concatenate([T[:, [1, 2, 0]]])] - V[T]
        if np.hypot(d[..., 0], d[..., 1]).max() <= h * (1 + 1e-9):
            break
        area *= 0.7
    else:
        raise MeshError("could not reach the target edge length")
    mark = out["vertex_markers"].ravel().astype(bool)
    # positive orientation
    p0, p1, p2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    neg = ((p1 - p0)[:, 0] * (p2 - p0)[:, 1] - (p1 - p0)[:, 1] * (p2 - p0)[:, 0]) < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    if not np.all(is_interior(body, V)):
        raise MeshError("mesh vertices leave the body")
    S = point_batch(body, V).slack
    return Mesh(V, T.astype(np.int64), mark, S)


def _strip(inner: np.ndarray, outer: np.ndarray, vin, vout):
    """Triangles between two rings; ``inner`` and ``outer`` are sorted ray indices, inner a subset of outer."""
    pos = np.searchsorted(outer, inner)
    tris = []
    n_in = len(inner)
    for i in range(n_in):
        k, l = pos[i], pos[(i + 1) % n_in]
        if l <= k:
            l += len(outer)
        seg = outer[np.arange(k, l + 1) % len(outer)]
        a0, a1 = inner[i], inner[(i + 1) % n_in]
        m = (len(seg) - 1) // 2
        for t in range(len(seg) - 1):
            piv = a0 if t < m else a1
            tris.append((vin(piv), vout(seg[t]), vout(seg[t + 1])))
        tris.append((vin(a0), vout(seg[m]), vin(a1)))
    return tris


def polar_mesh(body: ConvexBody, center, radii, n_dir: int = 128, depth: float = 0.0) -> Mesh:
    """Mesh of the metric ball of radius ``radii[-1]`` built on Hilbert polar coordinates.

    Vertices sit at the given Hilbert radii along an ordered fan of rays (with
    corner-graded rays when ``depth > 0``); the outer ring is the boundary.
    A ray aimed within eta of a corner only enters at radii s with
    ``eta >~ exp(-2 s)``; closer to the centre it would coincide with its
    neighbours. For polygon bodies vertex slacks are exact, so the mesh may
    reach radii where Euclidean coordinates no longer resolve the distance to
    the boundary.
    """
    radii = np.asarray(radii, dtype=float)
    if radii[0] <= 0 or np.any(np.diff(radii) <= 0):
        raise MeshError("radii must be positive and increasing")
    c = np.asarray(center, float)
    fan = ordered_fan(body, c, n_dir, depth)
    pts = fan.points(radii)  # (rays, rings)
    k = len(fan)
    if fan.exit_slack is not None:
        es = fan.exit_slack
        sep = np.sort(es, axis=1)[:, 1]  # second smallest exit slack: distance scale to a corner
        sep = np.where(sep > 0, sep, np.inf)
        active = sep[None, :] >= body.diameter * np.exp(-(2 * radii[:, None] + 6))
    else:
        active = np.ones((len(radii), k), bool)
    ids = -np.ones((len(radii), k), np.int64)
    ids[active] = 1 + np.arange(int(active.sum()))
    xy = [c[None]]
    S = [point_batch(body, c[None]).slack] if pts.slack is not None else None
    for q in range(len(radii)):
        j = np.flatnonzero(active[q])
        xy.append(pts.xy[j, q])
        if S is not None:
            S.append(pts.slack[j, q])
    xy = np.concatenate(xy)
    S = None if S is None else np.concatenate(S)
    rings = [np.flatnonzero(active[q]) for q in range(len(radii))]
    r0 = rings[0]
    tris = [(0, ids[0, r0[i]], ids[0, r0[(i + 1) % len(r0)]]) for i in range(len(r0))]
    for q in range(len(radii) - 1):
        tris += _strip(rings[q], rings[q + 1], lambda j, q=q: ids[q, j], lambda j, q=q: ids[q + 1, j])
    bd = np.zeros(len(xy), bool)
    bd[ids[-1, rings[-1]]] = True
    return Mesh(xy, np.asarray(tris, dtype=np.int64), bd, S)


def refine_mesh(mesh: Mesh) -> Mesh:
    """Split every triangle into four at its edge midpoints.

    The PL space of the result contains that of ``mesh``; midpoints of boundary
    edges are boundary vertices. Slacks are affine, so midpoint slacks are the
    endpoint means.
    """
    T = mesh.triangles
    E = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    uniq, inv, count = np.unique(E, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    n = len(mesh.vertices)
    mid = n + inv.reshape(3, -1).T  # midpoint ids of edges (01, 12, 20)
    V = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])])
    S = None
    if mesh.slack is not None:
        S = np.concatenate([mesh.slack, 0.5 * (mesh.slack[uniq[:, 0]] + mesh.slack[uniq[:, 1]])])
    a, b, c = T.T
    m01, m12, m20 = mid.T
    tris = np.concatenate([np.stack([a, m01, m20], 1), np.stack([m01, b, m12], 1),
                           np.stack([m20, m12, c], 1), np.stack([m01, m12, m20], 1)])
    bd = np.concatenate([mesh.boundary, count == 1])
    return Mesh(V, tris.astype(np.int64), bd, S)


# -- discretised quotients --------------------------------------------------------------------

class Discretization:
    """Per-triangle data for the one-point quadrature of the quotients.

    ``B`` maps the three vertex values of a triangle to its gradient covector
    in the local frame, ``weight`` is ``h(mid) * area_e(T)``.
    """

    def __init__(self, body: ConvexBody, mesh: Mesh, n_dir: int = 64):
        self.body = body
        self.mesh = mesh
        T = mesh.triangles
        xm = mesh.vertices[T].mean(1)
        sm = None if mesh.slack is None else mesh.slack[T].mean(1)
        self.norms = ln = local_norms(body, PointBatch(xm, sm), n_dir)
        if ln.chart is not None:
            Z = chart_coords(ln.chart, mesh.slack[T])
        else:
            Z = np.einsum("kij,kvj->kvi", ln.frame, mesh.vertices[T])
        E = np.stack([Z[:, 1] - Z[:, 0], Z[:, 2] - Z[:, 0]], 1)  # rows are edge vectors
        det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
        if np.any(det == 0):
            raise MeshError("degenerate triangle")
        Einv = np.linalg.inv(E)
        D = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        self.B = Einv @ D  # (t, 2, 3)
        self.weight = ln.density * 0.5 * np.abs(det) / np.abs(np.linalg.det(ln.frame))
        self.n = len(mesh.vertices)

    def gradients(self, f: np.ndarray) -> np.ndarray:
        return np.einsum("kij,kj->ki", self.B, f[self.mesh.triangles])

    def dual(self, f: np.ndarray):
        return self.norms.dual(self.gradients(f))

    def mean(self, f: np.ndarray) -> np.ndarray:
        return f[self.mesh.triangles].mean(1)

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum per-triangle vertex contributions (t, 3) into a vertex vector."""
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(), minlength=self.n)

    def stiffness_proxy(self) -> sp.csr_matrix:
        """``sum_T w_T B_T^T H_T B_T`` with H a quadratic proxy of the squared dual norm."""
        H = self.norms.quadratic_proxy()
        K = np.einsum("kai,kab,kbj->kij", self.B, H, self.B) * self.weight[:, None, None]
        T = self.mesh.triangles
        rows = np.repeat(T, 3, axis=1).ravel()
        cols = np.tile(T, (1, 3)).ravel()
        return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(self.n, self.n))

    def mass(self) -> sp.csr_matrix:
        """Matrix of the midpoint rule ``sum_T w_T mean_T(f)^2``."""
        T = self.mesh.triangles
        vals = np.repeat(self.weight / 9.0, 9)
        rows = np.repeat(T, 3, axis=1).ravel()
        cols = np.tile(T, (1, 3)).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))


def _values(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, PLFunction) else f, dtype=float)


def rayleigh_quotient(body: ConvexBody, mesh: Mesh, f, disc: Optional[Discretization] = None) -> float:
    """``sum w_T F*(df_T)^2 / sum w_T f(mid_T)^2`` with ``w_T = h(mid_T) area_e(T)``."""
    disc = disc or Discretization(body, mesh)
    v = _values(f)
    num = float(np.sum(disc.weight * disc.dual(v)[0] ** 2))
    den = float(np.sum(disc.weight * disc.mean(v) ** 2))
    if not den > 0:
        raise ValueError("zero denominator: the function vanishes on every midpoint")
    return num / den


# -- minimisation -----------------------------------------------------------------------------

def _objective(disc: Discretization, f: np.ndarray):
    """Quotient, numerator, denominator and a subgradient of the quotient."""
    val, X = disc.dual(f)
    w = disc.weight
    num = float(np.sum(w * val**2))
    m = disc.mean(f)
    den = float(np.sum(w * m**2))
    gN = disc.scatter(2 * (w * val)[:, None] * np.einsum("kij,ki->kj", disc.B, X))
    gD = disc.scatter(np.repeat((2 * w * m / 3.0)[:, None], 3, axis=1))
    q = num / den
    return q, (gN - q * gD) / den


def _descent(disc, lu, free, f0, max_iter, window: int = 50, tol: float = 1e-8):
    f = np.zeros(disc.n)
    f[free] = f0
    q, g = _objective(disc, f)
    hist = [q]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = -lu.solve(g[free])
        slope = float(g[free] @ d)
        if slope >= 0:
            d, slope = -g[free], -float(g[free] @ g[free])
        a = 0.5
        while True:
            trial = f.copy()
            trial[free] = f[free] + a * d
            qt, gt = _objective(disc, trial)
            if qt <= q + 1e-4 * a * slope or a < 1e-12:
                break
            a *= 0.5
        if qt > q:
            hist.append(q)
        else:
            nrm = math.sqrt(float(np.sum(disc.weight * disc.mean(trial) ** 2)))
            f = trial / nrm
            q, g = _objective(disc, f)
            hist.append(q)
        if len(hist) > window and hist[-window - 1] - hist[-1] < tol * abs(hist[-1]):
            converged = True
            break
    return f, q, converged, it


def minimize_rayleigh(body: ConvexBody, mesh: Mesh, restarts: int = 5, max_iter: int = 2000,
                      seed: int = 0, disc: Optional[Discretization] = None) -> SpectralEstimate:
    """Minimise the Rayleigh quotient over PL functions vanishing on the boundary.

    Preconditioned subgradient descent with Armijo backtracking, renormalised
    onto the unit L2(mu) sphere after each step; the preconditioner is a
    stiffness matrix built from a quadratic proxy of the squared dual norm.
    Restarts use nonnegative random starts from ``default_rng([seed, restart])``
    and run in order; the lowest quotient wins (ties: lowest restart index).
    """
    if mesh.n_interior < 1:
        raise MeshError("mesh has no interior vertex")
    disc = disc or Discretization(body, mesh)
    free = np.flatnonzero(~mesh.boundary)
    K = disc.stiffness_proxy()[free][:, free].tocsc()
    scale = K.diagonal().mean() * 1e-10
    lu = splu((K + scale * sp.identity(len(free))).tocsc())
    best = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([seed, r])
        f0 = rng.random(len(free))
        if len(free) == 1:
            f0 = np.ones(1)
        f, q, conv, it = _descent(disc, lu, free, f0, max_iter)
        if best is None or q < best[1]:
            best = (f, q, conv, it)
    f, _, conv, it = best
    if np.sum(f) < 0:
        f = -f
    pl = PLFunction(f, mesh)
    lam = rayleigh_quotient(body, mesh, pl, disc)
    return SpectralEstimate(lam, pl, max(1, restarts), bool(conv), mesh.h, it)


def riemannian_eig(body: ConvexBody, mesh: Mesh, disc: Optional[Discretization] = None) -> float:
    """Smallest generalized eigenvalue of the quadratic discretization (ellipses only)."""
    if body.kind != "ellipse":
        raise ValueError("the quadratic eigenproblem is only exact for ellipses")
    disc = disc or Discretization(body, mesh)
    free = np.flatnonzero(~mesh.boundary)
    K = disc.stiffness_proxy()[free][:, free].tocsc()
    M = disc.mass()[free][:, free].tocsc()
    if len(free) < 200:
        return float(eigh(K.toarray(), M.toarray(), eigvals_only=True)[0])
    vals = eigsh(K, k=1, M=M, sigma=0, which="LM", return_eigenvectors=False)
    return float(vals[0])


# -- exhaustion and stability -------------------------------------------------------------------

def inscribed_region(body: ConvexBody, h: float) -> Region:
    """Polygon inscribed in the body with boundary spacing about h."""
    if body.is_polygon:
        P = body.V
    else:
        n = max(16, int(math.ceil(body.perimeter / h)))
        P = body.boundary_points(n)
    # pull the vertices strictly inside
    c = body.centroid
    P = c + (1 - 1e-9) * (P - c)
    return make_region(body, P, check=False)


@dataclass(frozen=True)
class Exhaustion:
    sequence: List[Tuple[float, SpectralEstimate]]
    extrapolated: Optional[float]

    @property
    def values(self) -> np.ndarray:
        return np.array([e.lambda_ for _, e in self.sequence])

    @property
    def non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) <= 1e-6 * self.values[:-1]))


def richardson(alphas, values) -> Optional[float]:
    """Linear extrapolation in (1 - alpha) of the last two values to alpha = 1."""
    if len(alphas) < 2:
        return None
    x0, x1 = 1 - alphas[-2], 1 - alphas[-1]
    y0, y1 = values[-2], values[-1]
    return float((y1 * x0 - y0 * x1) / (x0 - x1))


def lambda1_exhaustion(body: ConvexBody, alphas: Sequence[float], h: float = 0.05, restarts: int = 5,
                       max_iter: int = 2000, seed: int = 0) -> Exhaustion:
    """Dirichlet estimates on the homothets ``alpha C`` about the centroid, alpha increasing."""
    alphas = [float(a) for a in alphas]
    if any(not 0 < a < 1 for a in alphas) or np.any(np.diff(alphas) <= 0):
        raise ValueError("alphas must be increasing in (0, 1)")
    seq = []
    for a in alphas:
        inner = homothety(body, body.centroid, a)
        region = make_region(body, inscribed_region(inner, h).boundary)
        mesh = triangulate(body, region, h)
        seq.append((a, minimize_rayleigh(body, mesh, restarts, max_iter, seed)))
    ex = richardson(alphas, [e.lambda_ for _, e in seq])
    return Exhaustion(seq, ex)


def annulus_test_function(body: ConvexBody, center, R: float, mesh: Mesh) -> PLFunction:
    """``clamp(1 - max(0, d(center, v) - R), 0, 1)`` at the mesh vertices."""
    c = np.asarray(center, dtype=float)
    if mesh.slack is not None:
        sc = point_batch(body, c[None]).slack[0]
        d = distance_from_slacks(sc, mesh.slack)
    else:
        d = distances(body, np.broadcast_to(c, mesh.vertices.shape), mesh.vertices)
    if np.min(d[mesh.boundary]) < R + 1 - 1e-9:
        raise MeshError("the ball of radius R + 1 does not fit in the mesh")
    vals = np.clip(1 - np.maximum(0.0, d - R), 0.0, 1.0)
    vals[mesh.boundary] = 0.0  # Dirichlet data; removes rounding on the ring d = R + 1
    return PLFunction(vals, mesh)


def annulus_mesh(body: ConvexBody, center, R: float, n_dir: int = 96, dr: float = 0.25,
                 n_shell: int = 8) -> Mesh:
    """Polar mesh of ``B_{R+1}`` with ring spacing dr inside ``B_R`` and n_shell rings in the shell."""
    inner = np.arange(dr, R, dr)
    shell = R + np.linspace(0.0, 1.0, n_shell + 1)
    return polar_mesh(body, center, np.concatenate([inner, shell]), n_dir, depth=R + 1)


@dataclass(frozen=True)
class SandwichReport:
    rho: float
    lambdas: dict
    spread: float


def sandwich_stability(body: ConvexBody, region: Region, rho: float, h: float, restarts: int = 3,
                       max_iter: int = 2000, seed: int = 0) -> SandwichReport:
    """Dirichlet estimates on one mesh of the region for bodies sandwiched between
    ``(1 - rho) C`` and ``(1 + rho) C``, with their maximal relative spread."""
    if not 0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2)")
    c = body.centroid
    if not np.all(is_interior(homothety(body, c, 1 - 2 * rho), region.boundary)):
        raise ValueError("region must lie inside (1 - 2 rho) C")
    mesh = triangulate(body, region, h)
    bodies = {"inner": homothety(body, c, 1 - rho), "body": body, "outer": homothety(body, c, 1 + rho)}
    if body.is_polygon:
        L = body._edges[3].min()
        r0 = 0.25 * L
        rho0 = smooth_polygon(body, r0).rho
        r = r0 * min(1.0, rho / rho0)
        bodies["smoothed"] = smooth_polygon(body, r).body
    lams = {}
    for name, G in bodies.items():
        m = Mesh(mesh.vertices, mesh.triangles, mesh.boundary,
                 point_batch(G, mesh.vertices).slack if G.is_polygon else None)
        lams[name] = minimize_rayleigh(G, m, restarts, max_iter, seed).lambda_
    v = np.array(list(lams.values()))
    return SandwichReport(rho, lams, float((v.max() - v.min()) / v.min()))
