"""Command-line entry point: ``hilbertgeom <subcommand> --body body.json ...``.

Exit status: 0 on success, 1 on input errors, 2 on numerical failure (only
raised for non-convergence when ``--strict`` is given).
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from .convex_body import BodyError, ConvexBody, NotInteriorError, parse_body, require_interior
from .cheeger import cheeger_scan, sobolev_quotient, tube_function
from .finsler_calculus import Norm2D, coarea_check, distance_field, normal_line, zeta
from .hilbert_metric import dual_norm, finsler_norm, hilbert_distance
from .hyperbolicity import FOUR_POINT, four_point_delta
from .measure import RegionError, ball_volume, ball_volume_bounds, metric_ball
from .spectrum import lambda1_exhaustion, polar_mesh

SUBCOMMANDS = ("validate", "dist", "norm", "ball-volume", "lambda1", "cheeger", "delta", "coarea", "zeta",
               "report")


class InputError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _point(text: str) -> np.ndarray:
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y but got {text!r}") from None
    if len(v) != 2 or not all(math.isfinite(x) for x in v):
        raise argparse.ArgumentTypeError(f"expected X,Y but got {text!r}")
    return np.array(v)


def _floats(text: str) -> List[float]:
    try:
        v = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}") from None
    if not v or not all(math.isfinite(x) for x in v):
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hilbertgeom", description="Plane Hilbert geometry computations.")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                           parser_class=_Parser)

    def common(sp):
        sp.add_argument("--body", required=True, help="JSON body description")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--strict", action="store_true", help="exit 2 on non-convergence")
        return sp

    common(sub.add_parser("validate", help="check a body description"))
    sp = common(sub.add_parser("dist", help="Hilbert distance"))
    sp.add_argument("--p", type=_point, required=True)
    sp.add_argument("--q", type=_point, required=True)
    sp.add_argument("--digits", type=int, default=7)
    sp = common(sub.add_parser("norm", help="Finsler norm and dual norm at a point"))
    sp.add_argument("--p", type=_point, required=True)
    sp.add_argument("--q", "--v", dest="v", type=_point, required=True, help="tangent vector (also read as covector)")
    sp = common(sub.add_parser("ball-volume", help="Hilbert measure of metric balls"))
    sp.add_argument("--p", type=_point, help="centre (default: centroid)")
    sp.add_argument("--R", type=_floats, required=True)
    sp = common(sub.add_parser("lambda1", help="Dirichlet estimates on homothets"))
    sp.add_argument("--alphas", type=_floats, default=[0.5, 0.7, 0.9, 0.97])
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--restarts", type=int, default=5)
    sp.add_argument("--max-iter", type=int, default=2000)
    sp = common(sub.add_parser("cheeger", help="Cheeger quotients of metric balls"))
    sp.add_argument("--p", type=_point, action="append", help="centre, repeatable (default: centroid)")
    sp.add_argument("--R", type=_floats, required=True)
    sp.add_argument("--max-edge", type=float, default=0.02)
    sp.add_argument("--eps", type=float, help="also report the tube-function Sobolev quotient of the best ball")
    sp = common(sub.add_parser("delta", help="four-point hyperbolicity estimates"))
    sp.add_argument("--p", type=_point, help="centre (default: centroid)")
    sp.add_argument("--scale", type=_floats, required=True)
    sp.add_argument("--samples", type=int, default=100000)
    sp = common(sub.add_parser("coarea", help="co-area check for the distance to a point"))
    sp.add_argument("--p", type=_point, help="centre (default: centroid)")
    sp.add_argument("--R", type=_floats, required=True, help="band T0,T1")
    sp.add_argument("--levels", type=int, default=33)
    sp.add_argument("--h", type=float, help="grid cell (default: diameter/200)")
    sp = common(sub.add_parser("zeta", help="zeta factor of the tangent norm at a point"))
    sp.add_argument("--p", type=_point, help="point (default: centroid)")
    sp.add_argument("--q", type=_point, action="append", help="direction, repeatable (default: 16 directions)")
    sp = common(sub.add_parser("report", help="spectrum, Cheeger and hyperbolicity summary"))
    sp.add_argument("--alphas", type=_floats, default=[0.5, 0.7, 0.9])
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--R", type=_floats, default=[1.0, 2.0, 4.0])
    sp.add_argument("--scale", type=_floats, default=[2.0, 4.0, 8.0])
    sp.add_argument("--samples", type=int, default=20000)
    return p


# -- output -------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def render(header: Sequence[str], rows: Sequence[Sequence], fmt: str, meta: Optional[dict] = None) -> str:
    if fmt == "json":
        doc = {"rows": [{k: _jsonable(x) for k, x in zip(header, r)} for r in rows]}
        if meta:
            doc["summary"] = {k: _jsonable(v) for k, v in meta.items()}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(x) for x in r) + "\n")
    return buf.getvalue()


def _write(text: str, out: Optional[str]):
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path: str) -> ConvexBody:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read body file {path!r}: {exc.strerror}") from None
    return parse_body(text)


def _center(body, p):
    return body.centroid if p is None else require_interior(body, p)


# -- subcommands -----------------------------------------------------------------------------

def cmd_validate(body, a):
    d = body.to_dict()
    return ["field", "value"], [["kind", d["kind"]], ["area", body.area], ["perimeter", body.perimeter]], None


def cmd_dist(body, a):
    d = hilbert_distance(body, a.p, a.q)
    if a.format == "csv":
        return None, f"{d:.{a.digits}g}\n", None
    return ["distance"], [[d]], None


def cmd_norm(body, a):
    return ["norm", "dual_norm"], [[finsler_norm(body, a.p, a.v), dual_norm(body, a.p, a.v)]], None


def cmd_ball_volume(body, a):
    c = _center(body, a.p)
    rows = []
    for R in a.R:
        if not R > 0:
            raise InputError("radii must be positive")
        est = ball_volume(body, c, R)
        C1, C2 = ball_volume_bounds(R, 2)
        rows.append([R, est.value, est.abs_error, C1, C2])
    return ["R", "volume", "abs_error", "C1", "C2"], rows, None


def cmd_lambda1(body, a):
    ex = lambda1_exhaustion(body, a.alphas, a.h, a.restarts, a.max_iter, a.seed)
    rows = [[al, a.h, e.lambda_, e.converged, e.restarts_used] for al, e in ex.sequence]
    if a.strict and not all(e.converged for _, e in ex.sequence):
        raise NumericalFailure("minimisation did not converge")
    meta = {"richardson_extrapolation": ex.extrapolated, "non_increasing": ex.non_increasing}
    return ["alpha", "h", "lambda", "converged", "restarts_used"], rows, meta


def cmd_cheeger(body, a):
    centers = [body.centroid] if not a.p else [require_interior(body, p) for p in a.p]
    rep = cheeger_scan(body, centers, a.R, a.max_edge)
    rows = [[c.center[0], c.center[1], c.radius, c.mu, c.nu_plain, c.nu_zeta, c.q_plain, c.q_zeta]
            for c in rep.candidates]
    meta = {"best_quotient_plain": rep.best_quotient_plain, "best_quotient_zeta": rep.best_quotient_zeta,
            "skipped": len(rep.skipped)}
    if a.eps is not None:
        if not a.eps > 0:
            raise InputError("--eps must be positive")
        best = rep.best_zeta
        R, eps = best.radius, a.eps
        radii = np.concatenate([np.linspace(0, R, max(2, int(math.ceil(R / 0.05))) + 1)[1:],
                                R + eps * np.arange(1, 9) / 8, R + eps + np.array([0.05, 0.1])])
        mesh = polar_mesh(body, best.center, radii, 512)
        ball = metric_ball(body, best.center, R, 1024)
        meta["tube_eps"] = eps
        meta["tube_sobolev_quotient"] = sobolev_quotient(body, mesh, tube_function(body, ball, eps, mesh))
    return ["center_x", "center_y", "R", "mu", "nu_plain", "nu_zeta", "q_plain", "q_zeta"], rows, meta


def cmd_delta(body, a):
    c = _center(body, a.p)
    if a.samples < 0:
        raise InputError("samples must be nonnegative")
    rows = []
    for s in a.scale:
        if not s > 0:
            raise InputError("scales must be positive")
        est = four_point_delta(body, c, s, a.samples, a.seed)
        rows.append([s, est.sample_count, est.delta, est.method, est.seed])
    return ["scale", "samples", "delta", "method", "seed"], rows, {"definition": FOUR_POINT}


def cmd_coarea(body, a):
    if len(a.R) != 2 or not 0 <= a.R[0] < a.R[1]:
        raise InputError("--R must be a band T0,T1 with 0 <= T0 < T1")
    c = _center(body, a.p)
    res = coarea_check(body, distance_field(body, c), None, a.R, a.levels, a.h)
    rows = [[t, m] for t, m in zip(res.levels, res.level_measures)]
    meta = {"lhs": res.lhs, "rhs": res.rhs, "rel_gap": res.rel_gap}
    return ["t", "level_measure"], rows, meta


def cmd_zeta(body, a):
    p = _center(body, a.p)
    F = Norm2D.hilbert(body, p)
    if a.q:
        dirs = a.q
    else:
        th = 2 * np.pi * np.arange(16) / 16
        dirs = list(np.stack([np.cos(th), np.sin(th)], 1))
    rows = []
    for y in dirs:
        if not np.any(y):
            raise InputError("directions must be nonzero")
        nl = normal_line(F, y)
        rows.append([y[0], y[1], zeta(F, y), nl.fan])
    return ["direction_x", "direction_y", "zeta", "fan"], rows, None


def cmd_report(body, a):
    ex = lambda1_exhaustion(body, a.alphas, a.h, restarts=2, seed=a.seed)
    rep = cheeger_scan(body, [body.centroid], a.R)
    deltas = [four_point_delta(body, body.centroid, s, a.samples, a.seed).delta for s in a.scale]
    slope = float(np.polyfit(a.scale, deltas, 1)[0]) if len(a.scale) > 1 else 0.0
    lam_final = ex.sequence[-1][1].lambda_
    lam_limit = ex.extrapolated if ex.extrapolated is not None else lam_final
    # a positive spectral gap forces the isoperimetric quotient of large balls
    # to stay bounded below; in a normed-plane-like body it decays like 1/R
    qs = sorted((c.radius, c.q_zeta) for c in rep.candidates)
    decay = 0.0
    if len(qs) > 1 and qs[-1][0] > qs[-2][0]:
        decay = -math.log(qs[-1][1] / qs[-2][1]) / math.log(qs[-1][0] / qs[-2][0])
    bounded = lam_limit > 0.1 and decay < 0.7
    growing = slope >= 0.2
    rows = [["alpha=" + repr(al), e.lambda_] for al, e in ex.sequence]
    rows += [["lambda_extrapolated", lam_limit],
             ["lambda_non_increasing", ex.non_increasing],
             ["cheeger_best_plain", rep.best_quotient_plain],
             ["cheeger_best_zeta", rep.best_quotient_zeta],
             ["cheeger_decay_exponent", decay]]
    rows += [["delta_scale=" + repr(s), d] for s, d in zip(a.scale, deltas)]
    rows += [["delta_slope", slope],
             ["lambda_bounded_away_from_zero", bounded],
             ["delta_growing_with_scale", growing],
             ["dichotomy_consistent", bounded != growing]]
    if a.strict and not all(e.converged for _, e in ex.sequence):
        raise NumericalFailure("minimisation did not converge")
    return ["quantity", "value"], rows, None


HANDLERS = {"validate": cmd_validate, "dist": cmd_dist, "norm": cmd_norm, "ball-volume": cmd_ball_volume,
            "lambda1": cmd_lambda1, "cheeger": cmd_cheeger, "delta": cmd_delta, "coarea": cmd_coarea,
            "zeta": cmd_zeta, "report": cmd_report}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if a.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        body = _load(a.body)
        header, rows, meta = HANDLERS[a.command](body, a)
        text = rows if header is None else render(header, rows, a.format, meta)
        _write(text, a.out)
        if meta and a.format == "csv":
            for k, v in meta.items():
                print(f"# {k}: {_fmt(v)}", file=sys.stderr)
    except BodyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InputError, NotInteriorError, RegionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
