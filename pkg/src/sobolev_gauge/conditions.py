"""Necessary conditions for (p, q)-extension domains, evaluated numerically.

All constants the underlying inequalities leave unspecified are set to 1, so
every bound here holds "up to constants"; reports carry that flag.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import capacity_phi_lower_bound
from .geometry import INF, Ball, BallDomain, Domain, VolumeEstimate, \
    ball_intersection_volume, density_ratio, loglog_slope
from .grid import Lattice, max_workers
from .metric import (EndpointUnresolved, GridGraph, MetricReport, ScaleUnresolved,
                     build_grid_graph, intrinsic_distance, m_at_scale)
from .setfn import ExponentPair, lalpha_norm

CONSTANTS = "up-to-constants"
SLOPE_TOL = 0.1


class HypothesisError(ValueError):
    pass


class ProbeOverlap(ValueError):
    pass


class HypothesisWarning(UserWarning):
    pass


def _require(cond: bool, message: str):
    if not cond:
        raise HypothesisError(message)


# ------------------------------------------------------------ density probes

@dataclass
class DensityProbe:
    ball: Ball
    volume: VolumeEstimate
    phi_lb: float
    infinite: bool = False
    center_in_closure: bool = True
    hypotheses_checked: bool = True

    def row(self) -> dict:
        return {"center": list(self.ball.center), "radius": self.ball.radius,
                "ball_volume": self.ball.volume, "intersection": self.volume.value,
                "stderr": self.volume.stderr, "phi_lb": self.phi_lb,
                "infinite": self.infinite, "center_in_closure": self.center_in_closure}


def _in_closure(domain: Domain, x, r: float, seed: int) -> bool:
    if domain.contains(np.asarray(x, float)[None])[0]:
        return True
    probe = Ball(tuple(x), r * 1e-3)
    return ball_intersection_volume(domain, probe, budget=2000, seed=seed).hits > 0


def density_phi_lb(domain: Domain, ball: Ball, pq: ExponentPair, budget: float = 10**5,
                   seed: int = 0, check_hypotheses: bool = True) -> DensityProbe:
    """``Phi(B) >= (|B|^p / |B & Omega|^q)^(1/(p-q))``."""
    if check_hypotheses:
        _require(pq.n < pq.q < pq.p,
                 f"density condition requires n < q < p (got n={pq.n}, q={pq.q}, p={pq.p})")
        _require(ball.radius < 1, f"density condition requires radius < 1 (got {ball.radius})")
    elif not pq.q < pq.p:
        raise HypothesisError("density bound needs q < p")
    vol = ball_intersection_volume(domain, ball, budget=budget, seed=seed)
    closure = _in_closure(domain, ball.center, ball.radius, seed)
    if not closure:
        warnings.warn(f"probe centre {ball.center} is outside the closure of the domain; "
                      "the density condition only constrains centres in the closure",
                      HypothesisWarning, stacklevel=2)
    phi = density_phi_from_volume(ball.volume, vol.value, pq)
    return DensityProbe(ball, vol, phi, math.isinf(phi), closure, check_hypotheses)


def density_phi_from_volume(ball_volume: float, volume: float, pq: ExponentPair) -> float:
    """``(|B|^p / V^q)^(1/(p-q))``, infinite when ``V = 0``."""
    if volume <= 0:
        return INF
    return math.exp((pq.p * math.log(ball_volume) - pq.q * math.log(volume)) / (pq.p - pq.q))


# ------------------------------------------------------------- metric probes

@dataclass
class MetricProbe:
    x: tuple[float, ...]
    y: tuple[float, ...]
    report: MetricReport
    phi_lb: float | None
    raw_ratio: float | None = None
    ball: Ball | None = None

    def row(self) -> dict:
        out = {"x": list(self.x), "y": list(self.y), **self.report.row(),
               "phi_lb": self.phi_lb, "raw_ratio": self.raw_ratio}
        if self.ball is not None:
            out["ball_radius"] = self.ball.radius
        return out


def metric_phi_lb(domain: Domain, x, y, pq: ExponentPair, h: float = 0.02,
                  stencil: int = 8, graph: GridGraph | None = None,
                  check_hypotheses: bool = True) -> MetricProbe:
    """``Phi(B(x, R)) >= (d^(1-n/p) / |x-y|^(1-n/q))^kappa`` with ``R = d = d_Omega(x, y)``.

    For ``q == p`` kappa degenerates; ``raw_ratio = (d/|x-y|)^(1-n/p)`` is
    reported instead and ``phi_lb`` is None.  ``check_hypotheses=False``
    skips the ``q > n`` and ``|x-y| < 1`` guards (the formula is still
    evaluated, but outside the range where it is a proven bound).
    """
    n = pq.n
    if check_hypotheses:
        _require(n < pq.q <= pq.p,
                 f"metric equivalence requires n < q <= p (got n={n}, q={pq.q}, p={pq.p})")
    elif not pq.q <= pq.p:
        raise HypothesisError("metric bound needs q <= p")
    rep = intrinsic_distance(domain, x, y, h, stencil, graph)
    if check_hypotheses:
        _require(rep.d_euclid < 1,
                 f"metric equivalence requires |x-y| < 1 (got {rep.d_euclid:g})")
    x = tuple(map(float, x))
    y = tuple(map(float, y))
    if not rep.reachable:
        return MetricProbe(x, y, rep, INF if pq.strict else None,
                           None if pq.strict else INF, None)
    d = rep.d_omega
    ball = Ball(x, d) if d > 0 else None
    if not pq.strict:
        return MetricProbe(x, y, rep, None, (d / rep.d_euclid) ** (1 - n / pq.p), ball)
    log_phi = pq.kappa * ((1 - n / pq.p) * math.log(d) - (1 - n / pq.q) * math.log(rep.d_euclid))
    return MetricProbe(x, y, rep, math.exp(log_phi), None, ball)


# ------------------------------------------------------------ cusp exponents

@dataclass(frozen=True)
class AdmissibilityRegion:
    alpha: float
    p: float
    q_max: float
    feasible: bool


def cusp_admissible_region(alpha: float, p: float) -> AdmissibilityRegion:
    """Largest target exponent ``2p/(alpha+1)`` for the planar cusp of order alpha."""
    if not alpha >= 1:
        raise ValueError("cusp exponent must be >= 1")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    q_max = 2 * p / (alpha + 1)
    return AdmissibilityRegion(float(alpha), float(p), q_max, q_max > 1)


@dataclass
class SharpnessTrend:
    alpha: float
    pq: ExponentPair
    radii: list[float]
    phi_lb: list[float]
    slope: float
    bounded: bool
    threshold: float
    hypotheses_checked: bool

    @property
    def expected_bounded(self) -> bool:
        return self.pq.q <= self.threshold


def sharpness_trend(alpha: float, pq: ExponentPair, levels: Sequence[int] = range(4, 11),
                    budget: float = 10**5, seed: int = 0) -> SharpnessTrend:
    """Density bound on ``B(0, 2^-k)`` at the cusp tip and its log-log slope in r.

    Exponent pairs with ``q <= n`` fall outside the density theorem but the
    trend is still informative; they are evaluated with hypotheses unchecked.
    """
    from .geometry import CuspDomain

    dom = CuspDomain(alpha)
    check = pq.n < pq.q < pq.p
    radii = [2.0**-k for k in levels]
    phis = [density_phi_lb(dom, Ball((0.0, 0.0), r), pq, budget, seed, check).phi_lb
            for r in radii]
    slope = loglog_slope(radii, phis)
    return SharpnessTrend(alpha, pq, radii, phis, slope, slope >= -SLOPE_TOL,
                          cusp_admissible_region(alpha, pq.p).q_max, check)


# --------------------------------------------------------------- norm bounds

def field_nodes(domain: Domain, spacing: float) -> np.ndarray:
    """Cell-centre sample points of a ``spacing`` lattice that lie in the domain."""
    lo, hi = domain.bbox
    lat = Lattice.covering(lo, hi, spacing, offset=0.5)
    pts = lat.points().reshape(-1, lat.dim)
    return pts[domain.contains(pts)]


@dataclass
class NormBound:
    lb: float
    norm: float
    alpha: float
    scale: float
    spacing: float
    values: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    infinite_at: list = field(default_factory=list)
    variant: str = ""
    flags: dict = field(default_factory=dict)

    @property
    def infinite(self) -> bool:
        return not math.isfinite(self.lb)


def _map(fn, items):
    workers = max_workers()
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def norm_lb_from_K(domain: Domain, pq: ExponentPair, r: float, spacing: float,
                   budget: float = 2000, seed: int = 0) -> NormBound:
    """``||E|| >= ||K_r||_{L_alpha}^(1/p)`` with ``alpha = q/(p-q)``."""
    _require(pq.n < pq.q < pq.p,
             f"K bound requires n < q < p (got n={pq.n}, q={pq.q}, p={pq.p})")
    alpha = pq.reg_alpha
    pts = field_nodes(domain, spacing)
    seeds = np.random.SeedSequence(seed).generate_state(len(pts))
    ratios = _map(lambda i: density_ratio(domain, pts[i], r, budget, int(seeds[i])).ratio,
                  range(len(pts)))
    vals = np.asarray(ratios, float)
    norm = lalpha_norm(vals, spacing, alpha, dim=domain.dim, points=pts)
    lb = norm.value ** (1 / pq.p)
    return NormBound(lb, norm.value, alpha, r, spacing, vals, pts, norm.infinite_at, "K",
                     {"constants": CONSTANTS})


def norm_lb_from_M(domain: Domain, pq: ExponentPair, r: float, spacing: float,
                   h: float = 0.02, stencil: int = 8, directions: int = 16,
                   graph: GridGraph | None = None) -> dict[str, NormBound]:
    """``||E|| >= ||M_r||_{L_alpha}^(1-n/q)``, ``alpha = (pq - pn)/(p - q)``.

    Returns bounds for both readings of ``M_r``: ``"sup"`` (largest sampled
    ratio at distance r) and ``"inf"`` (smallest).
    """
    _require(pq.n < pq.q < pq.p,
             f"M bound requires n < q < p (got n={pq.n}, q={pq.q}, p={pq.p})")
    alpha = pq.m_alpha
    g = graph or build_grid_graph(domain, h, stencil)
    pts = field_nodes(domain, spacing)

    def one(i):
        try:
            s = m_at_scale(domain, pts[i], r, graph=g, directions=directions, search_factor=8.0)
            return s.sup, s.inf
        except (ScaleUnresolved, EndpointUnresolved):
            return math.nan, math.nan

    res = np.asarray(_map(one, range(len(pts))), float).reshape(-1, 2)
    skipped = int(np.isnan(res[:, 0]).sum())
    out = {}
    for col, name in ((0, "sup"), (1, "inf")):
        norm = lalpha_norm(res[:, col], spacing, alpha, dim=domain.dim, points=pts)
        lb = norm.value ** (1 - pq.n / pq.q)
        out[name] = NormBound(lb, norm.value, alpha, r, spacing, res[:, col], pts,
                              norm.infinite_at, name,
                              {"constants": CONSTANTS, "skipped_nodes": skipped})
    return out


# ---------------------------------------------------------------- aggregation

def check_disjoint(balls: Sequence[Ball]) -> None:
    for i, a in enumerate(balls):
        for b in balls[i + 1:]:
            if not a.disjoint_from(b):
                raise ProbeOverlap(f"probes not disjoint: {a} and {b}")


def aggregate_norm_lb(probes: Sequence[tuple[Ball, float]], pq: ExponentPair) -> float:
    """``||E|| >= (sum_i phi_lb(B_i))^(1/kappa)`` over pairwise disjoint balls."""
    check_disjoint([b for b, _ in probes])
    total = sum(v for _, v in probes)
    if not math.isfinite(total):
        return INF
    return total ** (1 / pq.kappa)


def greedy_disjoint(candidates: Sequence[tuple[Ball, float]]) -> list[int]:
    """Indices of a disjoint subfamily, picked by decreasing score."""
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i][1], i))
    chosen: list[int] = []
    for i in order:
        ball = candidates[i][0]
        if all(ball.disjoint_from(candidates[j][0]) for j in chosen):
            chosen.append(i)
    return sorted(chosen)


def interior_points(domain: Domain, count: int, rng: np.random.Generator,
                    max_tries: int = 200) -> np.ndarray:
    lo, hi = domain.bbox
    found = []
    for _ in range(max_tries):
        pts = lo + (hi - lo) * rng.random((max(4 * count, 64), len(lo)))
        found.extend(pts[domain.contains(pts)])
        if len(found) >= count:
            return np.asarray(found[:count])
    raise ValueError("could not sample interior points; domain too thin for its bbox")


def boundary_points(domain: Domain, count: int, seed: int = 0,
                    iterations: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Points near the boundary by bisection along random rays from interior points.

    Returns ``(inside, outside)`` endpoints of the final bracket; ``inside``
    lies in the domain.
    """
    rng = np.random.default_rng(seed)
    starts = interior_points(domain, count, rng)
    lo, hi = domain.bbox
    diam = float(np.linalg.norm(hi - lo))
    step = diam / 64
    ins, outs = [], []
    for x in starts:
        v = rng.normal(size=len(x))
        v /= np.linalg.norm(v)
        a, b = 0.0, step
        while domain.contains((x + b * v)[None])[0]:
            a, b = b, b + step
            if b > 2 * diam:
                break
        for _ in range(iterations):
            m = 0.5 * (a + b)
            if domain.contains((x + m * v)[None])[0]:
                a = m
            else:
                b = m
        ins.append(x + a * v)
        outs.append(x + b * v)
    return np.asarray(ins), np.asarray(outs)


@dataclass
class ConditionReport:
    condition: str
    pq: ExponentPair
    records: list[dict]
    used: list[int]
    phi_sum: float
    norm_lb: float
    constants: str = CONSTANTS
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"condition": self.condition, "exponents": self.pq.as_dict(),
                "constants": self.constants, "phi_lb_sum": self.phi_sum,
                "norm_lb": self.norm_lb, "used_probes": self.used,
                "notes": self.notes, "probes": self.records}


def _aggregate(cands: list[tuple[Ball, float]], pq: ExponentPair):
    used = greedy_disjoint(cands) if cands else []
    total = sum(cands[i][1] for i in used)
    lb = aggregate_norm_lb([cands[i] for i in used], pq) if used else 0.0
    return used, total, lb


def run_check(domain: Domain, pq: ExponentPair, condition: str, probes: int = 16,
              seed: int = 0, radius: float = 0.05, budget: float = 20_000,
              h: float = 0.02, stencil: int = 8) -> ConditionReport:
    """Probe a domain and aggregate the implied norm lower bound."""
    if condition == "density":
        return _check_density(domain, pq, probes, seed, radius, budget)
    if condition == "metric":
        return _check_metric(domain, pq, probes, seed, radius, h, stencil)
    if condition == "capacity":
        return _check_capacity(domain, pq, probes, seed, radius, h)
    raise ValueError(f"unknown condition {condition!r}")


def _check_density(domain, pq, probes, seed, radius, budget):
    inside, _ = boundary_points(domain, probes, seed)
    seeds = np.random.SeedSequence(seed).generate_state(probes)
    records, cands, cand_idx = [], [], []
    notes = []
    for i, c in enumerate(inside):
        pr = density_phi_lb(domain, Ball(tuple(c), radius), pq, budget, int(seeds[i]))
        records.append(pr.row())
        if pr.center_in_closure:
            cands.append((pr.ball, pr.phi_lb))
            cand_idx.append(i)
        else:
            notes.append(f"probe {i} centre outside the closure; excluded")
    used, total, lb = _aggregate(cands, pq)
    return ConditionReport("density", pq, records, [cand_idx[i] for i in used], total, lb,
                           notes=notes)


def _check_metric(domain, pq, probes, seed, radius, h, stencil):
    rng = np.random.default_rng(seed)
    g = build_grid_graph(domain, h, stencil)
    xs = interior_points(domain, 4 * probes, rng)
    records, cands, cand_idx = [], [], []
    for x in xs:
        if len(records) == probes:
            break
        v = rng.normal(size=len(x))
        v *= rng.uniform(0.5, 1.0) * radius * 10 / np.linalg.norm(v)
        y = x + v
        if not domain.contains(y[None])[0] or np.linalg.norm(v) >= 1:
            continue
        try:
            pr = metric_phi_lb(domain, x, y, pq, graph=g)
        except EndpointUnresolved:
            continue
        records.append(pr.row())
        if pr.ball is not None and pr.phi_lb is not None:
            cands.append((pr.ball, pr.phi_lb))
            cand_idx.append(len(records) - 1)
    used, total, lb = _aggregate(cands, pq)
    return ConditionReport("metric", pq, records, [cand_idx[i] for i in used], total, lb)


def _check_capacity(domain, pq, probes, seed, radius, h):
    # plates of radius r/4 need a few grid cells across them
    h = min(h, radius / 16)
    inside, _ = boundary_points(domain, probes, seed)
    records, cands = [], []
    for c in inside:
        plate = BallDomain(tuple(c), radius / 4, closed=True)
        shell = BallDomain(tuple(c), radius)
        res = capacity_phi_lower_bound(domain, shell, plate, pq, h)
        records.append({"center": c.tolist(), "radius": radius, "plate_radius": radius / 4,
                        "h": h, "cap_q": res.cap_q.value, "cap_p": res.cap_p.value,
                        "phi_lb": res.phi_lb, "note": res.note})
        cands.append((Ball(tuple(c), radius), res.phi_lb))
    used, total, lb = _aggregate(cands, pq)
    return ConditionReport("capacity", pq, records, used, total, lb)
