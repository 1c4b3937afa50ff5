"""Command-line front end: ``sobolev-gauge <subcommand> [flags]``.

Every output starts with a header that echoes the tool version, the parsed
configuration and the seed.  CSV headers are ``#``-prefixed comment lines;
JSON outputs carry them as top-level keys.  Infinite values are written as
the marker ``inf``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import Condenser, p_capacity
from .conditions import (CONSTANTS, HypothesisError, ProbeOverlap, cusp_admissible_region,
                         density_phi_from_volume, norm_lb_from_K, norm_lb_from_M, run_check)
from .expr import ExpressionError
from .geometry import (Ball, BudgetTooSmall, DomainSpecError, ball_intersection_volume,
                       domain_from_spec, limsup_density, load_domain, loglog_slope)
from .metric import (DomainUnresolved, EndpointUnresolved, ScaleUnresolved, build_grid_graph,
                     intrinsic_distance, m_at_scale, vaisala_test_function)
from .setfn import DemoExtensionOperator, ExponentError, ExponentPair, estimate_phi

log = logging.getLogger("sobolev_gauge")

INF_MARKER = "inf"


class NumericalFailure(RuntimeError):
    """Raised after outputs are written when a solver did not converge."""


# ------------------------------------------------------------------ parsing

def _vector(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"coordinates must be finite: {text!r}")
    return vals


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _count(text: str) -> int:
    """Integer count; accepts scientific notation such as ``1e5``."""
    v = _positive(text)
    if v != int(v):
        raise argparse.ArgumentTypeError(f"expected an integer count, got {text!r}")
    return int(v)


def _stencil(text: str) -> int:
    if text not in ("8", "16"):
        raise argparse.ArgumentTypeError("stencil must be 8 or 16")
    return int(text)


def _add_output(p: argparse.ArgumentParser, default="csv"):
    p.add_argument("--format", choices=("csv", "json"), default=default)
    p.add_argument("--out", type=Path, help="output file (default: stdout)")


def _add_domain(p):
    p.add_argument("--domain", type=Path, required=True, help="domain spec JSON file")


def _add_pq(p, required=True):
    p.add_argument("--p", type=_positive, required=required)
    p.add_argument("--q", type=_positive, required=required)
    p.add_argument("--n", type=int, default=2, help="space dimension (default 2)")


def _add_graph(p, h=0.02):
    p.add_argument("--h", type=_positive, default=h, help="grid spacing")
    p.add_argument("--stencil", type=_stencil, default=8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sobolev-gauge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("volume", help="|B(x,r) & Omega| estimate")
    _add_domain(p)
    p.add_argument("--center", type=_vector, required=True)
    p.add_argument("--radius", type=_positive, required=True)
    p.add_argument("--method", choices=("montecarlo", "grid"), default="montecarlo")
    p.add_argument("--samples", type=_count, default=100_000)
    p.add_argument("--grid-h", type=_positive, help="cell size for --method grid")
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("density", help="density ratio K(x, r) over dyadic radii")
    _add_domain(p)
    p.add_argument("--center", type=_vector, required=True)
    p.add_argument("--radius", type=_positive, required=True, help="largest radius r0")
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--samples", type=_count, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_pq(p, required=False)
    _add_output(p)

    p = sub.add_parser("geodesic", help="intrinsic distance between two points")
    _add_domain(p)
    p.add_argument("--from", dest="x", type=_vector, required=True)
    p.add_argument("--to", dest="y", type=_vector, required=True)
    _add_graph(p)
    _add_output(p)

    p = sub.add_parser("m-scale", help="sup/inf of d_Omega/|x-y| at |x-y| = r")
    _add_domain(p)
    p.add_argument("--center", type=_vector, required=True)
    p.add_argument("--radius", type=_positive, action="append", required=True)
    p.add_argument("--directions", type=int, default=16)
    _add_graph(p)
    _add_output(p)

    p = sub.add_parser("vaisala", help="build and verify the distance-based test function")
    _add_domain(p)
    p.add_argument("--from", dest="x", type=_vector, required=True)
    p.add_argument("--to", dest="y", type=_vector, required=True)
    _add_graph(p)
    _add_output(p)

    p = sub.add_parser("capacity", help="p-capacity of a condenser")
    p.add_argument("--condenser", type=Path, required=True,
                   help='JSON {"E": spec, "U": spec, "Omega": spec, "p": p}')
    p.add_argument("--p", type=_positive, help="override the exponent in the file")
    p.add_argument("--h", type=_positive, default=1 / 64)
    p.add_argument("--tol", type=_positive, default=1e-8)
    p.add_argument("--init", choices=("p2", "random"), default="p2")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("phi-estimate", help="lower estimate of Phi(B) for the reflection operator")
    p.add_argument("--ball", type=_vector, required=True, help="cx,cy,r")
    _add_pq(p)
    p.add_argument("--family-size", type=int, default=50)
    p.add_argument("--h", type=_positive, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("check", help="probe a necessary condition and aggregate the norm bound")
    _add_domain(p)
    _add_pq(p)
    p.add_argument("--condition", choices=("density", "metric", "capacity"), required=True)
    p.add_argument("--probes", type=int, default=16)
    p.add_argument("--radius", type=_positive, default=0.05)
    p.add_argument("--samples", type=_count, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    _add_graph(p)
    p.add_argument("--csv", type=Path, help="also write per-probe rows as CSV here")
    _add_output(p, default="json")

    p = sub.add_parser("admissible-region", help="q_max(p) = 2p/(alpha+1) for the cusp")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--p-min", type=float, default=1.0)
    p.add_argument("--p-max", type=float, default=8.0)
    p.add_argument("--step", type=_positive, default=0.5)
    _add_output(p)

    p = sub.add_parser("norm-bound", help="operator norm lower bound from the K or M field")
    _add_domain(p)
    _add_pq(p)
    p.add_argument("--via", choices=("K", "M"), default="K")
    p.add_argument("--radius", type=_positive, action="append", required=True)
    p.add_argument("--spacing", type=_positive, default=0.05, help="field node spacing")
    p.add_argument("--samples", type=_count, default=2000)
    p.add_argument("--seed", type=int, default=0)
    _add_graph(p)
    _add_output(p)
    return parser


# ------------------------------------------------------------------- output

def _clean(v):
    """Make values JSON/CSV friendly; infinities become the ``inf`` marker."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return INF_MARKER if v > 0 else "-" + INF_MARKER
        if math.isnan(v):
            return None
        return v
    if isinstance(v, Path):
        return str(v)
    return v


def _cell(v):
    v = _clean(v)
    if v is None:
        return ""
    if isinstance(v, list):
        return ";".join(str(x) for x in v)
    return v


def _config(args) -> dict:
    skip = {"format", "out", "verbose", "csv"}
    return {k: _clean(v) for k, v in sorted(vars(args).items()) if k not in skip}


def header(args) -> dict:
    return {"tool": "sobolev-gauge", "version": __version__, "command": args.command,
            "seed": getattr(args, "seed", None), "config": _config(args)}


def render_csv(head: dict, rows: list[dict], summary: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# tool={head['tool']} version={head['version']} command={head['command']}\n")
    buf.write(f"# seed={head['seed']}\n")
    buf.write("# config=" + json.dumps(head["config"], sort_keys=True) + "\n")
    for k, v in (summary or {}).items():
        buf.write(f"# {k}={json.dumps(_clean(v))}\n")
    if rows:
        cols = list(rows[0])
        for r in rows[1:]:
            cols += [c for c in r if c not in cols]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _cell(r.get(c)) for c in cols})
    return buf.getvalue()


def render_json(head: dict, rows: list[dict], summary: dict | None = None) -> str:
    doc = dict(head)
    doc.update(_clean(summary or {}))
    doc["rows"] = _clean(rows)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _emit(args, rows, summary=None):
    head = header(args)
    text = (render_json if args.format == "json" else render_csv)(head, rows, summary)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")


# --------------------------------------------------------------- subcommands

def _pq(args) -> ExponentPair:
    return ExponentPair(args.p, args.q, args.n)


def _check_dim(domain, *points):
    for x in points:
        if len(x) != domain.dim:
            raise ValueError(f"point {x} has dimension {len(x)}, domain has {domain.dim}")


def cmd_volume(args):
    dom = load_domain(args.domain)
    _check_dim(dom, args.center)
    if args.method == "grid":
        if args.grid_h is None:
            raise ValueError("--method grid needs --grid-h")
        budget = args.grid_h
    else:
        budget = args.samples
    ball = Ball(args.center, args.radius)
    est = ball_intersection_volume(dom, ball, args.method, budget, args.seed)
    row = {"center": list(args.center), "radius": args.radius, "ball_volume": ball.volume,
           **est.as_dict()}
    _emit(args, [row])


def cmd_density(args):
    dom = load_domain(args.domain)
    _check_dim(dom, args.center)
    pq = None
    if args.p is not None or args.q is not None:
        if args.p is None or args.q is None:
            raise ValueError("--p and --q go together")
        pq = _pq(args)
        if not pq.strict:
            raise HypothesisError("density bound needs q < p")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = limsup_density(dom, args.center, args.radius, args.levels, args.samples, args.seed)
    rows = []
    for e in res.estimates:
        ball = Ball(args.center, e.radius)
        row = {"radius": e.radius, "ball_volume": ball.volume, "intersection": e.volume.value,
               "stderr": e.volume.stderr, "K": e.ratio, "infinite": e.infinite}
        if pq is not None:
            row["phi_lb"] = density_phi_from_volume(ball.volume, e.volume.value, pq)
        rows.append(row)
    summary = {"slope": res.slope, "diverges": res.diverges}
    if pq is not None:
        summary["phi_lb_slope"] = loglog_slope(res.radii, [r["phi_lb"] for r in rows])
        summary["constants"] = CONSTANTS
    _emit(args, rows, summary)


def cmd_geodesic(args):
    dom = load_domain(args.domain)
    _check_dim(dom, args.x, args.y)
    rep = intrinsic_distance(dom, args.x, args.y, args.h, args.stencil)
    row = {"x": list(args.x), "y": list(args.y), "h": args.h, "stencil": args.stencil,
           "d_omega": rep.d_omega, "d_euclid": rep.d_euclid, "ratio": rep.ratio,
           "reachable": rep.reachable}
    _emit(args, [row])


def cmd_m_scale(args):
    dom = load_domain(args.domain)
    _check_dim(dom, args.center)
    g = build_grid_graph(dom, args.h, args.stencil)
    rows = []
    for r in args.radius:
        s = m_at_scale(dom, args.center, r, directions=args.directions, graph=g)
        rows.append({"radius": r, "sup": s.sup, "inf": s.inf, "used": s.used,
                     "skipped": s.skipped})
    _emit(args, rows, {"h": args.h, "stencil": args.stencil})


def cmd_vaisala(args):
    dom = load_domain(args.domain)
    _check_dim(dom, args.x, args.y)
    _, rep = vaisala_test_function(dom, args.x, args.y, args.h, args.stencil)
    rows = [{"check": k, "passed": v} for k, v in rep.checks.items()]
    summary = {"radius": rep.radius, "eps": rep.eps, "f_min": rep.f_min, "f_max": rep.f_max,
               "max_edge_excess": rep.max_edge_excess, "support_radius": rep.support_radius,
               "max_gradient": rep.max_gradient, "passed": rep.passed}
    _emit(args, rows, summary)


def load_condenser(path: Path) -> tuple[Condenser, float | None]:
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    try:
        plate = domain_from_spec(spec["E"]) if spec.get("E") is not None else None
        cond = Condenser(plate, domain_from_spec(spec["U"]), domain_from_spec(spec["Omega"]))
    except KeyError as exc:
        raise DomainSpecError(f"condenser spec is missing {exc}") from None
    return cond, spec.get("p")


def cmd_capacity(args):
    cond, p_file = load_condenser(args.condenser)
    p = args.p if args.p is not None else p_file
    if p is None:
        raise ValueError("no exponent: give --p or 'p' in the condenser file")
    if not float(p) > 1:
        raise ValueError("p must exceed 1")
    init = "random" if args.init == "random" else None
    res = p_capacity(cond, float(p), args.h, args.tol, init=init, seed=args.seed,
                     max_iter=args.max_iter)
    _emit(args, [res.row()])
    if not res.converged:
        raise NumericalFailure(f"capacity solver did not converge in {res.iterations} iterations")


def cmd_phi_estimate(args):
    if len(args.ball) != 3:
        raise ValueError("--ball expects cx,cy,r")
    cx, cy, r = args.ball
    if not r > 0:
        raise ValueError("ball radius must be positive")
    pq = _pq(args)
    if not pq.strict:
        raise ExponentError("Phi estimates need q < p")
    if args.family_size < 1:
        raise ValueError("--family-size must be positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_phi(DemoExtensionOperator(), Ball((cx, cy), r), pq, h=args.h,
                           family_size=args.family_size, seed=args.seed)
    rows = [{"function": i, "q_norm": nq, "p_norm": np_, "ratio": rat}
            for i, ((nq, np_), rat) in enumerate(zip(est.norms, est.ratios))]
    rows.append({"function": "max", "ratio": est.phi_lb})
    _emit(args, rows, {"phi_lb": est.phi_lb, "best": est.best, "skipped": est.skipped,
                       "kappa": est.kappa})


def cmd_check(args):
    dom = load_domain(args.domain)
    rep = run_check(dom, _pq(args), args.condition, args.probes, args.seed, args.radius,
                    args.samples, args.h, args.stencil)
    doc = rep.as_dict()
    rows = doc.pop("probes")
    for i, r in enumerate(rows):
        r["probe"] = i
        r["used"] = i in rep.used
    _emit(args, rows, doc)
    if args.csv is not None:
        args.csv.write_text(render_csv(header(args), rows, doc), encoding="utf-8")


def cmd_admissible_region(args):
    if args.p_max < args.p_min:
        raise ValueError("--p-max must be >= --p-min")
    count = int(math.floor((args.p_max - args.p_min) / args.step + 1e-9)) + 1
    rows = []
    for k in range(count):
        p = args.p_min + k * args.step
        a = cusp_admissible_region(args.alpha, p)
        rows.append({"alpha": a.alpha, "p": a.p, "q_max": a.q_max, "feasible": a.feasible})
    _emit(args, rows)


def cmd_norm_bound(args):
    dom = load_domain(args.domain)
    pq = _pq(args)
    rows = []
    graph = None
    for r in args.radius:
        if args.via == "K":
            bounds = [norm_lb_from_K(dom, pq, r, args.spacing, args.samples, args.seed)]
        else:
            graph = graph or build_grid_graph(dom, args.h, args.stencil)
            bounds = list(norm_lb_from_M(dom, pq, r, args.spacing, graph=graph).values())
        for b in bounds:
            rows.append({"radius": r, "variant": b.variant, "alpha": b.alpha, "norm": b.norm,
                         "lb": b.lb, "infinite": b.infinite,
                         "infinite_nodes": len(b.infinite_at)})
    summary = {"constants": CONSTANTS}
    if len(args.radius) > 1:
        for variant in sorted({r["variant"] for r in rows}):
            sel = [r for r in rows if r["variant"] == variant]
            summary[f"trend_{variant}"] = loglog_slope([r["radius"] for r in sel],
                                                      [r["lb"] for r in sel])
    _emit(args, rows, summary)


COMMANDS = {
    "volume": cmd_volume, "density": cmd_density, "geodesic": cmd_geodesic,
    "m-scale": cmd_m_scale, "vaisala": cmd_vaisala, "capacity": cmd_capacity,
    "phi-estimate": cmd_phi_estimate, "check": cmd_check,
    "admissible-region": cmd_admissible_region, "norm-bound": cmd_norm_bound,
}

VALIDATION_ERRORS = (ValueError, DomainSpecError, ExpressionError, BudgetTooSmall,
                     HypothesisError, ProbeOverlap, ExponentError, EndpointUnresolved,
                     FileNotFoundError, json.JSONDecodeError)
NUMERICAL_ERRORS = (NumericalFailure, DomainUnresolved, ScaleUnresolved, ArithmeticError)


_NEGATIVE_VALUE = re.compile(r"^-[0-9.]")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--opt -0.5,0`` as ``--opt=-0.5,0`` (argparse would see a flag)."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE_VALUE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except NUMERICAL_ERRORS as exc:
        print(f"sobolev-gauge: numerical failure: {exc}", file=sys.stderr)
        return 3
    except VALIDATION_ERRORS as exc:
        print(f"sobolev-gauge: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
