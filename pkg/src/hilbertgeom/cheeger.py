"""Isoperimetric (Cheeger) and Sobolev quotients.

Two boundary measures are used: the Hilbert length of the boundary (``plain``)
and the induced measure with the zeta correction (``zeta``). Candidate domains
are metric balls, so every reported best quotient is an upper bound of the
corresponding Cheeger constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import shapely

from .convex_body import ConvexBody, signed_boundary_distance, BOUNDARY_TOL
from .finsler_calculus import hypersurface_measure, zeta_bounds
from .hilbert_metric import PointBatch, batch_distances, distances, point_batch
from .measure import Region, RegionError, adaptive_ball, curve_length, metric_ball, region_volume
from .spectrum import Discretization, Mesh, MeshError, PLFunction, SpectralEstimate, _values


def _boundary_measures(body: ConvexBody, region: Region):
    hm = hypersurface_measure(body, region)
    ratio = hm.density[hm.length > 0]
    return hm.plain_total, hm.total, ratio


def cheeger_quotient(body: ConvexBody, region: Region, weighted: bool = False) -> float:
    """Boundary measure over Hilbert measure of the region."""
    mu = region_volume(body, region).value
    if not mu > 0:
        raise RegionError("region has zero measure")
    if weighted:
        return hypersurface_measure(body, region).total / mu
    return curve_length(body, region) / mu


@dataclass(frozen=True)
class Candidate:
    index: int
    center: np.ndarray
    radius: float
    mu: float
    nu_plain: float
    nu_zeta: float
    ratio_min: float  # extreme per-segment nu / nu_bar on the boundary
    ratio_max: float

    @property
    def q_plain(self) -> float:
        return self.nu_plain / self.mu

    @property
    def q_zeta(self) -> float:
        return self.nu_zeta / self.mu


@dataclass
class CheegerReport:
    candidates: List[Candidate]
    skipped: List[tuple] = field(default_factory=list)
    lambda_estimate: Optional[float] = None

    @property
    def best_plain(self) -> Candidate:
        return min(self.candidates, key=lambda c: (c.q_plain, c.index))

    @property
    def best_zeta(self) -> Candidate:
        return min(self.candidates, key=lambda c: (c.q_zeta, c.index))

    @property
    def best_quotient_plain(self) -> float:
        return self.best_plain.q_plain

    @property
    def best_quotient_zeta(self) -> float:
        return self.best_zeta.q_zeta

    @property
    def inequality_slack(self) -> Optional[float]:
        if self.lambda_estimate is None:
            return None
        return self.lambda_estimate - 0.25 * self.best_quotient_zeta**2


def _fits(body: ConvexBody, ball: Region) -> bool:
    if ball.slack is not None:
        return bool(np.all(ball.slack > 0))
    return bool(np.all(signed_boundary_distance(body, ball.boundary) < -BOUNDARY_TOL))


def cheeger_scan(body: ConvexBody, centers, radii: Sequence[float], max_edge: float = 0.02,
                 lambda_estimate: Optional[float] = None) -> CheegerReport:
    """Both quotients for every metric ball ``B_R(c)``; balls that do not fit are skipped."""
    cands, skipped = [], []
    idx = 0
    for c in np.atleast_2d(np.asarray(centers, dtype=float)):
        for R in radii:
            if not _fits(body, metric_ball(body, c, float(R))):
                skipped.append((tuple(c), float(R)))
                continue
            ball = adaptive_ball(body, c, float(R), max_edge)
            if not _fits(body, ball):
                skipped.append((tuple(c), float(R)))
                continue
            plain, zeta_total, ratio = _boundary_measures(body, ball)
            mu = region_volume(body, ball).value
            cands.append(Candidate(idx, c.copy(), float(R), mu, plain, zeta_total,
                                   float(ratio.min()), float(ratio.max())))
            idx += 1
    if not cands:
        raise RegionError("no candidate ball fits in the body")
    return CheegerReport(cands, skipped, lambda_estimate)


# -- tube functions and Sobolev quotients ---------------------------------------------------------

def _resample_closed(P: np.ndarray, n: int, S: Optional[np.ndarray] = None):
    Q = np.concatenate([P, P[:1]])
    seg = np.hypot(*(Q[1:] - Q[:-1]).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.arange(n) * s[-1] / n
    k = np.clip(np.searchsorted(s, t, side="right") - 1, 0, len(P) - 1)
    lam = ((t - s[k]) / np.where(seg[k] > 0, seg[k], 1.0))[:, None]
    out = (1 - lam) * Q[k] + lam * Q[k + 1]
    if S is None:
        return out, None
    SQ = np.concatenate([S, S[:1]])
    return out, (1 - lam) * SQ[k] + lam * SQ[k + 1]


def distance_to_curve(body: ConvexBody, points: PointBatch, region: Region, n_samples: int = 512,
                      chunk: int = 2048) -> np.ndarray:
    """Hilbert distance from each point to the region's boundary, sampled at n_samples points."""
    B, SB = _resample_closed(region.boundary, n_samples, region.slack)
    if SB is None and body.is_polygon:
        SB = point_batch(body, B).slack
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        P = points.take(slice(lo, lo + chunk))
        Pp = PointBatch(np.broadcast_to(P.xy[:, None], (len(P), n_samples, 2)),
                        None if P.slack is None else P.slack[:, None, :])
        Qb = PointBatch(np.broadcast_to(B[None], (len(P), n_samples, 2)),
                        None if SB is None else SB[None])
        if Pp.slack is not None:
            d = batch_distances(body, Pp, Qb)
        else:
            d = distances(body, Pp.xy, Qb.xy)
        out[lo:lo + chunk] = d.min(1)
    return out


def tube_function(body: ConvexBody, region: Region, eps: float, mesh: Mesh,
                  n_samples: int = 512) -> PLFunction:
    """1 on U, ``1 - d(v, dU)/eps`` in the outer eps-tube, 0 beyond."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    poly = region.polygon()
    shapely.prepare(poly)
    inside = shapely.contains_xy(poly, mesh.vertices[:, 0], mesh.vertices[:, 1])
    if region.is_ball:
        # exact membership through the distance to the centre
        c = point_batch(body, region.center[None])
        cb = PointBatch(np.broadcast_to(c.xy, mesh.vertices.shape),
                        None if c.slack is None else np.broadcast_to(c.slack, mesh.slack.shape))
        inside = batch_distances(body, cb, mesh.batch()) <= region.radius
    out = ~inside
    d = np.zeros(len(mesh.vertices))
    if np.any(out):
        d[out] = distance_to_curve(body, mesh.batch().take(out), region, n_samples)
    if np.any(d[mesh.boundary] < eps * (1 - 1e-9)):
        raise MeshError("the eps-tube leaves the mesh")
    vals = np.where(inside, 1.0, np.clip(1 - d / eps, 0.0, 1.0))
    return PLFunction(vals, mesh)


def sobolev_quotient(body: ConvexBody, mesh: Mesh, f, disc: Optional[Discretization] = None) -> float:
    """``sum w_T F*(df_T) / sum w_T |f(mid_T)|``."""
    disc = disc or Discretization(body, mesh)
    v = _values(f)
    num = float(np.sum(disc.weight * disc.dual(v)[0]))
    den = float(np.sum(disc.weight * np.abs(disc.mean(v))))
    if not den > 0:
        raise ValueError("zero denominator")
    return num / den


# -- chain report ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainReport:
    lambda_estimate: float
    best_quotient_plain: float
    best_quotient_zeta: float
    quarter_square: float  # (1/4) (best zeta quotient)^2, from upper bounds only
    known_constant: Optional[float]
    known_slack: Optional[float]  # lambda - (1/4) I^2 with the known constant
    ratio_range: tuple
    ratio_bounds: tuple
    ratios_ok: bool


def cheeger_chain_report(body: ConvexBody, scan: CheegerReport, lam, known_constant: Optional[float] = None,
                         tol: float = 0.05) -> ChainReport:
    """Checkable parts of ``lambda_1 >= (1/4) I^2`` and of the nu / nu_bar comparison.

    The Cheeger constant is only bounded above by the scan, so the inequality
    itself is evaluated only against ``known_constant`` when given (1 for
    ellipses). ``tol`` widens the ratio bounds for sampling error.
    """
    lv = lam.lambda_ if isinstance(lam, SpectralEstimate) else float(lam)
    lo = min(c.ratio_min for c in scan.candidates)
    hi = max(c.ratio_max for c in scan.candidates)
    blo, bhi = zeta_bounds(2)
    ok = (lo >= blo * (1 - tol)) and (hi <= bhi * (1 + tol))
    ks = None if known_constant is None else lv - 0.25 * known_constant**2
    return ChainReport(lv, scan.best_quotient_plain, scan.best_quotient_zeta,
                       0.25 * scan.best_quotient_zeta**2, known_constant, ks, (lo, hi), (blo, bhi), ok)
