"""Domains, ball/domain intersection volumes and density ratios.

Every domain answers three questions:

* ``contains(pts)``: vectorized strict membership,
* ``cover(lo, hi)``: a short list of boxes whose union contains
  ``domain & box(lo, hi)`` (used to stratify Monte Carlo samples so that
  thin features such as cusp tips are resolved),
* ``ball_relation(center, radius)``: ``"inside"``, ``"outside"`` or ``None``
  when the domain cannot certify either.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon

from .expr import compile_predicate

INF = math.inf

Box = tuple[np.ndarray, np.ndarray]


class BudgetTooSmall(ValueError):
    """Sampling budget or grid spacing below the accepted minimum."""


class DomainSpecError(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got {pts.shape}")
    return pts


def _clip(lo, hi, blo, bhi) -> Box | None:
    nlo = np.maximum(lo, blo)
    nhi = np.minimum(hi, bhi)
    if np.any(nhi <= nlo):
        return None
    return nlo, nhi


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return unit_ball_volume(self.dim) * self.radius**self.dim

    @property
    def bbox(self) -> Box:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def contains(self, pts) -> np.ndarray:
        pts = _as_points(pts, self.dim)
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=-1)
        return d2 < self.radius**2

    def disjoint_from(self, other: "Ball") -> bool:
        gap = math.dist(self.center, other.center)
        return gap >= self.radius + other.radius

    def tight_box(self, lo, hi) -> Box | None:
        """Bounding box of ``ball & box(lo, hi)`` (slightly loose, never too small)."""
        c = np.asarray(self.center)
        clipped = _clip(lo, hi, c - self.radius, c + self.radius)
        if clipped is None:
            return None
        lo, hi = clipped
        # distance from the centre to the box, per axis
        gap = np.maximum(np.maximum(lo - c, c - hi), 0.0)
        if np.sum(gap**2) >= self.radius**2:
            return None
        nlo, nhi = lo.copy(), hi.copy()
        for k in range(len(c)):
            perp = np.sum(np.delete(gap, k) ** 2)
            half = math.sqrt(max(self.radius**2 - perp, 0.0))
            nlo[k] = max(lo[k], c[k] - half)
            nhi[k] = min(hi[k], c[k] + half)
        if np.any(nhi <= nlo):
            return None
        return nlo, nhi


class Domain:
    """Base class; subclasses set ``dim``, ``bbox`` and ``kind``."""

    kind = "domain"
    dim: int
    bbox: Box

    def __init__(self, convex: bool | None = None, connected: bool | None = None):
        self.metadata = {"convex": convex, "connected": connected}

    def contains(self, pts) -> np.ndarray:
        pts = _as_points(pts, self.dim)
        lo, hi = self.bbox
        inside = np.all((pts >= lo) & (pts <= hi), axis=-1)
        if inside.all():
            return np.asarray(self._contains(pts), dtype=bool)
        out = np.zeros(pts.shape[:-1], dtype=bool)
        if np.any(inside):
            out[inside] = self._contains(pts[inside])
        return out

    def _contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cover(self, lo, hi) -> list[Box]:
        b = _clip(np.asarray(lo, float), np.asarray(hi, float), *self.bbox)
        return [] if b is None else [b]

    def ball_relation(self, center, radius) -> str | None:
        lo, hi = self.bbox
        c = np.asarray(center, float)
        if np.any(c + radius <= lo) or np.any(c - radius >= hi):
            return "outside"
        return None

    def to_spec(self) -> dict:
        raise NotImplementedError

    # combinators
    def __or__(self, other):
        return Union([self, other])

    def __and__(self, other):
        return Intersection([self, other])

    def __sub__(self, other):
        return Difference(self, other)

    def scaled(self, factor: float) -> "Domain":
        return Scaled(self, factor)


class BallDomain(Domain):
    kind = "ball"

    def __init__(self, center, radius, closed=False):
        super().__init__(convex=True, connected=True)
        self.ball = Ball(tuple(center), float(radius))
        self.closed = bool(closed)
        self.dim = self.ball.dim
        self.bbox = self.ball.bbox

    def _contains(self, pts):
        d2 = np.sum((pts - np.asarray(self.ball.center)) ** 2, axis=-1)
        r2 = self.ball.radius**2
        return d2 <= r2 if self.closed else d2 < r2

    def cover(self, lo, hi):
        b = self.ball.tight_box(np.asarray(lo, float), np.asarray(hi, float))
        return [] if b is None else [b]

    def ball_relation(self, center, radius):
        gap = math.dist(center, self.ball.center)
        if gap + radius <= self.ball.radius:
            return "inside"
        if gap >= radius + self.ball.radius:
            return "outside"
        return None

    def to_spec(self):
        spec = {"kind": "ball", "center": list(self.ball.center), "radius": self.ball.radius}
        if self.closed:
            spec["closed"] = True
        return spec


class BoxDomain(Domain):
    kind = "box"

    def __init__(self, lo, hi):
        super().__init__(convex=True, connected=True)
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise DomainSpecError("box needs lo < hi componentwise")
        self.dim = len(lo)
        self.bbox = (lo, hi)

    def _contains(self, pts):
        lo, hi = self.bbox
        return np.all((pts > lo) & (pts < hi), axis=-1)

    def ball_relation(self, center, radius):
        lo, hi = self.bbox
        c = np.asarray(center, float)
        if np.all(c - radius >= lo) and np.all(c + radius <= hi):
            return "inside"
        gap = np.maximum(np.maximum(lo - c, c - hi), 0.0)
        if np.sum(gap**2) >= radius**2:
            return "outside"
        return None

    def to_spec(self):
        return {"kind": "box", "lo": self.bbox[0].tolist(), "hi": self.bbox[1].tolist()}


class PolygonDomain(Domain):
    kind = "polygon"

    def __init__(self, vertices):
        poly = Polygon(vertices)
        if not poly.is_valid or poly.area <= 0:
            raise DomainSpecError("polygon must be simple with positive area")
        super().__init__(convex=bool(poly.equals(poly.convex_hull)), connected=True)
        self.vertices = [tuple(map(float, v)) for v in vertices]
        self.poly = poly
        shapely.prepare(self.poly)
        self.dim = 2
        x0, y0, x1, y1 = poly.bounds
        self.bbox = (np.array([x0, y0]), np.array([x1, y1]))

    def _contains(self, pts):
        return shapely.contains_xy(self.poly, pts[..., 0], pts[..., 1])

    def cover(self, lo, hi):
        piece = self.poly.intersection(shapely.box(lo[0], lo[1], hi[0], hi[1]))
        if piece.is_empty or piece.area == 0:
            return []
        x0, y0, x1, y1 = piece.bounds
        return [(np.array([x0, y0]), np.array([x1, y1]))]

    def ball_relation(self, center, radius):
        pt = shapely.Point(center)
        # buffer() inscribes the circle; inflate slightly so "inside" stays sound
        outer = pt.buffer(radius / math.cos(math.pi / 256), quad_segs=64)
        if self.poly.contains(outer):
            return "inside"
        if self.poly.distance(pt) >= radius:
            return "outside"
        return None

    def to_spec(self):
        return {"kind": "polygon", "vertices": [list(v) for v in self.vertices]}


class CuspTip(Domain):
    """``{0 < x1 <= 1, |x2| < x1**alpha}``."""

    kind = "cusp_tip"

    def __init__(self, alpha: float):
        if not alpha >= 1:
            raise DomainSpecError(f"cusp exponent must be >= 1, got {alpha}")
        super().__init__(convex=alpha == 1, connected=True)
        self.alpha = float(alpha)
        self.dim = 2
        self.bbox = (np.array([0.0, -1.0]), np.array([1.0, 1.0]))

    def _contains(self, pts):
        x1, x2 = pts[..., 0], pts[..., 1]
        with np.errstate(invalid="ignore"):
            return (x1 > 0) & (x1 <= 1) & (np.abs(x2) < np.abs(x1) ** self.alpha)

    def cover(self, lo, hi):
        a = max(lo[0], 0.0)
        b = min(hi[0], 1.0)
        if b <= a:
            return []
        w = b**self.alpha
        c = max(lo[1], -w)
        d = min(hi[1], w)
        if d <= c:
            return []
        return [(np.array([a, c]), np.array([b, d]))]

    def ball_relation(self, center, radius):
        rel = super().ball_relation(center, radius)
        if rel:
            return rel
        if center[0] + radius <= 0:
            return "outside"
        return None

    def to_spec(self):
        return {"kind": "cusp_tip", "alpha": self.alpha}


class ImplicitDomain(Domain):
    kind = "implicit"

    def __init__(self, expr: str, lo, hi, convex=None, connected=None):
        super().__init__(convex=convex, connected=connected)
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise DomainSpecError("implicit domain needs a finite bbox with lo < hi")
        self.expr = expr
        self.dim = len(lo)
        self.bbox = (lo, hi)
        self._pred = compile_predicate(expr, self.dim)

    def _contains(self, pts):
        return self._pred(pts)

    def to_spec(self):
        return {"kind": "implicit", "expr": self.expr,
                "bbox": [self.bbox[0].tolist(), self.bbox[1].tolist()]}


class Union(Domain):
    kind = "union"

    def __init__(self, parts: Sequence[Domain], convex=None, connected=None):
        parts = list(parts)
        if not parts:
            raise DomainSpecError("union needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise DomainSpecError("union parts must share a dimension")
        super().__init__(convex=convex, connected=connected)
        self.parts = parts
        self.dim = dims.pop()
        self.bbox = (np.min([p.bbox[0] for p in parts], axis=0),
                     np.max([p.bbox[1] for p in parts], axis=0))

    def _contains(self, pts):
        out = np.zeros(pts.shape[:-1], dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out

    def cover(self, lo, hi):
        return [b for p in self.parts for b in p.cover(lo, hi)]

    def ball_relation(self, center, radius):
        rels = [p.ball_relation(center, radius) for p in self.parts]
        if "inside" in rels:
            return "inside"
        if all(r == "outside" for r in rels):
            return "outside"
        return None

    def to_spec(self):
        return {"kind": "union", "parts": [p.to_spec() for p in self.parts]}


class Intersection(Domain):
    kind = "intersection"

    def __init__(self, parts: Sequence[Domain]):
        parts = list(parts)
        if not parts:
            raise DomainSpecError("intersection needs at least one part")
        super().__init__(convex=all(p.metadata["convex"] for p in parts) or None)
        self.parts = parts
        self.dim = parts[0].dim
        lo = np.max([p.bbox[0] for p in parts], axis=0)
        hi = np.min([p.bbox[1] for p in parts], axis=0)
        if np.any(hi <= lo):
            raise DomainSpecError("intersection is empty")
        self.bbox = (lo, hi)

    def _contains(self, pts):
        out = np.ones(pts.shape[:-1], dtype=bool)
        for p in self.parts:
            out &= p.contains(pts)
        return out

    def cover(self, lo, hi):
        boxes = [(np.asarray(lo, float), np.asarray(hi, float))]
        for p in self.parts:
            boxes = [b for blo, bhi in boxes for b in p.cover(blo, bhi)]
        return boxes

    def ball_relation(self, center, radius):
        rels = [p.ball_relation(center, radius) for p in self.parts]
        if all(r == "inside" for r in rels):
            return "inside"
        if "outside" in rels:
            return "outside"
        return None

    def to_spec(self):
        return {"kind": "intersection", "parts": [p.to_spec() for p in self.parts]}


class Difference(Domain):
    kind = "difference"

    def __init__(self, base: Domain, removed: Domain, connected=None):
        if base.dim != removed.dim:
            raise DomainSpecError("difference operands must share a dimension")
        super().__init__(convex=None, connected=connected)
        self.base = base
        self.removed = removed
        self.dim = base.dim
        self.bbox = base.bbox

    def _contains(self, pts):
        return self.base.contains(pts) & ~self.removed.contains(pts)

    def cover(self, lo, hi):
        return self.base.cover(lo, hi)

    def ball_relation(self, center, radius):
        rel = self.base.ball_relation(center, radius)
        if rel == "outside":
            return rel
        if rel == "inside" and self.removed.ball_relation(center, radius) == "outside":
            return "inside"
        return None

    def to_spec(self):
        return {"kind": "difference", "parts": [self.base.to_spec(), self.removed.to_spec()]}


class Scaled(Domain):
    """The image ``factor * inner`` (homothety about the origin)."""

    kind = "scaled"

    def __init__(self, inner: Domain, factor: float):
        if not factor > 0:
            raise DomainSpecError("scale factor must be positive")
        super().__init__(**inner.metadata)
        self.inner = inner
        self.factor = float(factor)
        self.dim = inner.dim
        self.bbox = (inner.bbox[0] * factor, inner.bbox[1] * factor)

    def _contains(self, pts):
        return self.inner.contains(pts / self.factor)

    def cover(self, lo, hi):
        f = self.factor
        return [(a * f, b * f) for a, b in self.inner.cover(np.asarray(lo) / f, np.asarray(hi) / f)]

    def ball_relation(self, center, radius):
        return self.inner.ball_relation(np.asarray(center) / self.factor, radius / self.factor)

    def to_spec(self):
        return {"kind": "scaled", "factor": self.factor, "domain": self.inner.to_spec()}


class CuspDomain(Union):
    """Hölder cusp ``{0 < x1 <= 1, |x2| < x1**alpha}`` joined to ``B((2,0), sqrt 2)``."""

    kind = "cusp"

    def __init__(self, alpha: float):
        super().__init__([CuspTip(alpha), BallDomain((2.0, 0.0), math.sqrt(2.0))],
                         convex=alpha == 1, connected=True)
        self.alpha = float(alpha)

    def to_spec(self):
        return {"kind": "cusp", "alpha": self.alpha}


def l_domain() -> Domain:
    """``(0,2)^2`` minus ``[1,2) x (0,1]``."""
    big = BoxDomain([0.0, 0.0], [2.0, 2.0])
    notch = ImplicitDomain("1 <= x and x < 2 and 0 < y and y <= 1", [1.0, 0.0], [2.0, 1.0])
    return Difference(big, notch, connected=True)


def unit_disc() -> BallDomain:
    return BallDomain((0.0, 0.0), 1.0)


# ---------------------------------------------------------------- JSON specs

def domain_from_spec(spec: dict) -> Domain:
    try:
        kind = spec["kind"]
    except (KeyError, TypeError):
        raise DomainSpecError(f"domain spec needs a 'kind': {spec!r}") from None
    meta = {k: spec[k] for k in ("convex", "connected") if k in spec}
    try:
        if kind == "cusp":
            return CuspDomain(float(spec["alpha"]))
        if kind == "cusp_tip":
            return CuspTip(float(spec["alpha"]))
        if kind == "ball":
            return BallDomain(spec["center"], spec["radius"], spec.get("closed", False))
        if kind == "box":
            return BoxDomain(spec["lo"], spec["hi"])
        if kind == "polygon":
            return PolygonDomain(spec["vertices"])
        if kind == "implicit":
            lo, hi = spec["bbox"]
            return ImplicitDomain(spec["expr"], lo, hi, **meta)
        if kind == "union":
            return Union([domain_from_spec(p) for p in spec["parts"]], **meta)
        if kind == "intersection":
            return Intersection([domain_from_spec(p) for p in spec["parts"]])
        if kind == "difference":
            base, *removed = [domain_from_spec(p) for p in spec["parts"]]
            if not removed:
                raise DomainSpecError("difference needs at least two parts")
            cut = removed[0] if len(removed) == 1 else Union(removed)
            return Difference(base, cut, connected=meta.get("connected"))
        if kind == "scaled":
            return Scaled(domain_from_spec(spec["domain"]), float(spec["factor"]))
        if kind == "l_domain":
            return l_domain()
    except KeyError as exc:
        raise DomainSpecError(f"{kind} spec is missing field {exc}") from None
    raise DomainSpecError(f"unknown domain kind {kind!r}")


def load_domain(path: str | Path) -> Domain:
    with open(path, encoding="utf-8") as fh:
        return domain_from_spec(json.load(fh))


def contains(domain: Domain, x) -> bool:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    return bool(domain.contains(x[None, :])[0])


# ----------------------------------------------------------- volume estimates

MIN_SAMPLES = 1000
Z95 = 1.959963984540054


@dataclass
class VolumeEstimate:
    value: float
    stderr: float
    method: str
    samples_or_h: float
    seed: int | None
    hits: int = 0
    strata: int = 0
    exact: bool = False
    heuristic: bool = False

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _refine(domain: Domain, ball: Ball, max_strata: int) -> list[Box]:
    """Split the covering boxes of ``ball & domain``, largest first."""
    heap: list[tuple[float, int, Box]] = []
    counter = itertools.count()

    def push(box):
        t = ball.tight_box(*box)
        if t is not None:
            heapq.heappush(heap, (-float(np.prod(t[1] - t[0])), next(counter), t))

    for box in domain.cover(*ball.bbox):
        push(box)
    while heap and len(heap) < max_strata:
        _, _, (blo, bhi) = heapq.heappop(heap)
        axis = int(np.argmax(bhi - blo))
        mid = 0.5 * (blo[axis] + bhi[axis])
        for a, b in ((blo[axis], mid), (mid, bhi[axis])):
            hlo, hhi = blo.copy(), bhi.copy()
            hlo[axis], hhi[axis] = a, b
            for clo, chi in domain.cover(hlo, hhi):
                c = _clip(clo, chi, hlo, hhi)
                if c is not None:
                    push(c)
    return [box for _, _, box in sorted(heap, key=lambda e: e[1])]


def _in_any(pts: np.ndarray, los: np.ndarray, his: np.ndarray) -> np.ndarray:
    if len(los) == 0:
        return np.zeros(len(pts), dtype=bool)
    inside = (pts[:, None, :] >= los[None]) & (pts[:, None, :] < his[None])
    return np.any(np.all(inside, axis=-1), axis=-1)


def stratified_integral(boxes: list[Box], indicator, weight, budget: int, seed: int,
                        min_per_stratum: int = 8):
    """Stratified MC of ``int weight * indicator`` over the union of ``boxes``.

    Overlapping boxes are handled by attributing each point to the first
    box containing it.  Returns ``(value, halfwidth95, hits)``.
    """
    if not boxes:
        return 0.0, 0.0, 0
    vols = np.array([float(np.prod(hi - lo)) for lo, hi in boxes])
    alloc = np.maximum(min_per_stratum, np.floor(budget * vols / vols.sum())).astype(int)
    los = np.array([b[0] for b in boxes])
    his = np.array([b[1] for b in boxes])
    children = np.random.SeedSequence(seed).spawn(len(boxes))
    total = 0.0
    var = 0.0
    hits = 0
    for i, ((lo, hi), n, ss) in enumerate(zip(boxes, alloc, children)):
        rng = np.random.default_rng(ss)
        pts = lo + (hi - lo) * rng.random((n, len(lo)))
        mask = indicator(pts)
        if i:
            prior = np.all((los[:i] < hi) & (his[:i] > lo), axis=-1)
            if prior.any():
                mask &= ~_in_any(pts, los[:i][prior], his[:i][prior])
        k = int(mask.sum())
        hits += k
        if weight is None:
            vals = mask.astype(float)
        else:
            vals = np.where(mask, weight(pts), 0.0)
        mean = vals.mean()
        total += vols[i] * mean
        if weight is None:
            pt = (k + 1) / (n + 2)  # smoothed so empty strata still carry variance
            var += vols[i] ** 2 * pt * (1 - pt) / n
        else:
            var += vols[i] ** 2 * max(vals.var(ddof=1), (vals.max() / n) ** 2) / n
    return total, Z95 * math.sqrt(var), hits


def ball_intersection_volume(domain: Domain, ball: Ball, method: str = "montecarlo",
                             budget: float = 10**5, seed: int = 0,
                             max_strata: int = 256) -> VolumeEstimate:
    """Estimate ``|ball & domain|``.

    ``method="montecarlo"``: ``budget`` is the sample count (>= 1000).
    ``method="grid"``: ``budget`` is the cell size ``h`` (<= radius/8); the
    midpoint rule counts a cell when its centre is in ``ball & domain`` and the
    reported error ``perimeter(ball) * h`` is a heuristic.
    """
    if ball.dim != domain.dim:
        raise ValueError("ball and domain dimensions differ")
    if method == "montecarlo":
        n = int(budget)
        if n < MIN_SAMPLES:
            raise BudgetTooSmall(f"montecarlo budget {n} < {MIN_SAMPLES} samples")
    elif method == "grid":
        h = float(budget)
        if not (0 < h <= ball.radius / 8):
            raise BudgetTooSmall(f"grid spacing {h} must satisfy 0 < h <= radius/8 = {ball.radius / 8}")
    else:
        raise ValueError(f"unknown method {method!r}")

    rel = domain.ball_relation(ball.center, ball.radius)
    if rel == "inside":
        return VolumeEstimate(ball.volume, 0.0, method, budget, seed, exact=True)
    if rel == "outside":
        return VolumeEstimate(0.0, 0.0, method, budget, seed, exact=True)

    def indicator(pts):
        return ball.contains(pts) & domain.contains(pts)

    if method == "grid":
        return _grid_volume(domain, ball, h, indicator, seed)

    boxes = _refine(domain, ball, max_strata)
    if not boxes:
        return VolumeEstimate(0.0, 0.0, method, n, seed, exact=True)
    value, err, hits = stratified_integral(boxes, indicator, None, n, seed)
    cap = min(ball.volume, sum(float(np.prod(hi - lo)) for lo, hi in boxes))
    return VolumeEstimate(float(min(value, cap)), float(err), method, n, seed, hits=int(hits),
                          strata=len(boxes))


def _grid_volume(domain, ball, h, indicator, seed):
    lo, hi = ball.bbox
    axes = [np.arange(a + h / 2, b, h) for a, b in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    count = int(indicator(mesh).sum())
    n = ball.dim
    surface = n * unit_ball_volume(n) * ball.radius ** (n - 1)
    return VolumeEstimate(count * h**n, surface * h, "grid", h, seed, hits=count,
                          heuristic=True)


# -------------------------------------------------------------- density ratio

@dataclass
class DensityRatio:
    ratio: float
    radius: float
    volume: VolumeEstimate
    infinite: bool = False
    low_confidence: bool = False


def density_ratio(domain: Domain, x, r: float, budget: float = 10**5, seed: int = 0,
                  method: str = "montecarlo") -> DensityRatio:
    """``|B(x,r)| / |B(x,r) & domain|``; ``+inf`` (flagged) when no sample hits."""
    if not r > 0:
        raise ValueError("radius must be positive")
    ball = Ball(tuple(x), r)
    vol = ball_intersection_volume(domain, ball, method, budget, seed)
    if vol.value <= 0 or (not vol.exact and vol.hits == 0):
        return DensityRatio(INF, r, vol, infinite=True, low_confidence=True)
    return DensityRatio(ball.volume / vol.value, r, vol,
                        low_confidence=vol.value < vol.stderr)


@dataclass
class LimsupDensity:
    radii: list[float]
    ratios: list[float]
    slope: float
    diverges: bool
    limit: float
    estimates: list[DensityRatio] = field(default_factory=list, repr=False)


def loglog_slope(xs: Iterable[float], ys: Iterable[float]) -> float:
    xs = np.asarray(list(xs), float)
    ys = np.asarray(list(ys), float)
    ok = np.isfinite(ys) & (ys > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def limsup_density(domain: Domain, x, r0: float, levels: int = 6,
                   budget: float = 10**5, seed: int = 0) -> LimsupDensity:
    """K(x, r0 2^-k) for k < levels, with the log-log slope of K against r.

    A negative slope means K grows as r shrinks; ``diverges`` is
    ``slope < -0.1`` (or any infinite ratio).
    """
    if levels < 4:
        raise ValueError("levels must be >= 4")
    radii = [r0 * 2.0**-k for k in range(levels)]
    ests = [density_ratio(domain, x, r, budget, seed) for r in radii]
    ratios = [e.ratio for e in ests]
    slope = loglog_slope(radii, ratios)
    diverges = any(e.infinite for e in ests) or (slope < -0.1)
    if any(e.infinite for e in ests):
        warnings.warn("infinite density ratio encountered; slope uses finite radii only",
                      stacklevel=2)
    return LimsupDensity(radii, ratios, slope, bool(diverges), ratios[-1], ests)
