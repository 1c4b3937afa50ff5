"""Set functions bounding extension operator norms, and exponent bookkeeping.

For exponents ``1 <= q < p`` the gap exponent is ``kappa`` with
``1/kappa = 1/q - 1/p``.  ``phi`` values computed here are always lower
bounds (``phi_lb``): suprema over a finite family of test functions.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import INF, Ball, Domain, stratified_integral
from .grid import Lattice, cell_gradient


class ExponentError(ValueError):
    pass


def kappa(p: float, q: float) -> float:
    if not (1 <= q < p < math.inf):
        raise ExponentError(f"kappa undefined (use q<p): got p={p}, q={q}")
    return p * q / (p - q)


def regularity_alpha(p: float, q: float) -> float:
    """Integrability exponent ``q/(p-q)`` of the inverse density K."""
    if not q < p:
        raise ExponentError("regularity exponent needs q < p")
    return q / (p - q)


def m_alpha(p: float, q: float, n: int) -> float:
    """Integrability exponent ``(pq - pn)/(p - q)`` of the metric constant M."""
    if not q < p:
        raise ExponentError("metric exponent needs q < p")
    if not q > n:
        raise ExponentError(f"metric exponent needs q > n (q={q}, n={n})")
    return (p * q - p * n) / (p - q)


@dataclass(frozen=True)
class ExponentPair:
    p: float
    q: float
    n: int = 2

    def __post_init__(self):
        if not (1 <= self.q <= self.p):
            raise ExponentError(f"need 1 <= q <= p, got p={self.p}, q={self.q}")
        if self.n < 1:
            raise ExponentError("dimension must be positive")

    @property
    def strict(self) -> bool:
        return self.q < self.p

    @property
    def kappa(self) -> float:
        return kappa(self.p, self.q)

    @property
    def reg_alpha(self) -> float:
        return regularity_alpha(self.p, self.q)

    @property
    def m_alpha(self) -> float:
        return m_alpha(self.p, self.q, self.n)

    @property
    def flags(self) -> dict[str, bool]:
        return {"q_lt_p": self.q < self.p, "q_gt_n": self.q > self.n,
                "m_alpha_feasible": self.n < self.q < self.p}

    def as_dict(self) -> dict:
        out = {"p": self.p, "q": self.q, "n": self.n}
        if self.strict:
            out["kappa"] = self.kappa
            out["reg_alpha"] = self.reg_alpha
            if self.q > self.n:
                out["m_alpha"] = self.m_alpha
        return out


# ------------------------------------------------------------------ regions

@dataclass(frozen=True)
class AxisBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError("box needs lo < hi")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))

    @property
    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi)), axis=-1)


Generator = Ball | AxisBox


def _disjoint(a: Generator, b: Generator) -> bool:
    if isinstance(a, Ball) and isinstance(b, Ball):
        return a.disjoint_from(b)
    alo, ahi = a.bbox
    blo, bhi = b.bbox
    if np.any(ahi <= blo) or np.any(bhi <= alo):
        return True
    if isinstance(a, AxisBox) and isinstance(b, AxisBox):
        return False
    ball, box = (a, b) if isinstance(a, Ball) else (b, a)
    c = np.asarray(ball.center)
    gap = np.maximum(np.maximum(box.bbox[0] - c, c - box.bbox[1]), 0.0)
    return float(np.sum(gap**2)) >= ball.radius**2


@dataclass(frozen=True)
class Region:
    """A finite union of pairwise disjoint balls and boxes."""

    parts: tuple[Generator, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts:
            raise ValueError("region needs at least one generator")
        for i, a in enumerate(parts):
            for b in parts[i + 1:]:
                if not _disjoint(a, b):
                    raise ValueError("region generators must be pairwise disjoint")

    @classmethod
    def of(cls, *parts: Generator) -> "Region":
        return cls(tuple(parts))

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def contains(self, pts) -> np.ndarray:
        out = np.zeros(np.asarray(pts).shape[:-1], dtype=bool)
        for g in self.parts:
            out |= g.contains(pts)
        return out

    @property
    def bbox(self):
        return (np.min([g.bbox[0] for g in self.parts], axis=0),
                np.max([g.bbox[1] for g in self.parts], axis=0))

    @property
    def volume(self) -> float:
        return sum(g.volume for g in self.parts)


@dataclass
class SetValue:
    value: float
    stderr: float = 0.0


class AdditiveSetFunction:
    """Nonnegative additive set function on finite unions of generators.

    Either a ``density`` (point -> rate >= 0, integrated by stratified Monte
    Carlo) or an ``atoms`` table mapping generators to values.
    """

    def __init__(self, density: Callable[[np.ndarray], np.ndarray] | None = None,
                 atoms: dict[Generator, float] | None = None,
                 total_bound: float | None = None, budget: int = 20_000, seed: int = 0):
        if (density is None) == (atoms is None):
            raise ValueError("give exactly one of density or atoms")
        if atoms is not None:
            if any(v < 0 for v in atoms.values()):
                raise ValueError("atomic values must be nonnegative")
            keys = list(atoms)
            for i, a in enumerate(keys):
                for b in keys[i + 1:]:
                    if not _disjoint(a, b):
                        raise ValueError("atomic generators must be pairwise disjoint")
        self.density = density
        self.atoms = dict(atoms) if atoms is not None else None
        self.total_bound = total_bound
        self.budget = budget
        self.seed = seed

    @property
    def kind(self) -> str:
        return "density" if self.density is not None else "atomic"

    def evaluate(self, region: Region | Generator) -> SetValue:
        if not isinstance(region, Region):
            region = Region.of(region)
        if self.atoms is not None:
            missing = [g for g in region.parts if g not in self.atoms]
            if missing:
                raise ValueError(f"region outside the generator family: {missing[0]!r}")
            out = SetValue(math.fsum(self.atoms[g] for g in region.parts))
        else:
            total, err = 0.0, 0.0
            for g in region.parts:
                v, e = self._integrate(g)
                total += v
                err = math.hypot(err, e)
            out = SetValue(total, err)
        if self.total_bound is not None and out.value > self.total_bound + 2 * out.stderr:
            raise ValueError(f"set function exceeds its total bound {self.total_bound}")
        return out

    def _integrate(self, g: Generator) -> tuple[float, float]:
        lo, hi = g.bbox
        # seed tied to the generator so equal sets get equal estimates
        key = zlib.crc32(repr(g).encode())
        weight = lambda pts: np.maximum(np.asarray(self.density(pts), float), 0.0)  # noqa: E731
        val, err, _ = stratified_integral([(lo, hi)], g.contains, weight, self.budget,
                                          (self.seed, key))
        return val, err


# ------------------------------------------------------- extension operator

@dataclass
class DemoExtensionOperator:
    """Even reflection across ``x2 = 0`` from the upper half plane (within a box).

    Fields live on a lattice of the global grid ``h Z^2`` so the reflection
    line is a lattice row and the reflection is an index flip.
    """

    box: tuple[tuple[float, float], tuple[float, float]] = ((-4.0, 0.0), (4.0, 4.0))

    @property
    def domain(self) -> Domain:
        from .geometry import BoxDomain

        return BoxDomain(self.box[0], self.box[1])

    def in_domain(self, pts) -> np.ndarray:
        return self.domain.contains(pts)

    def apply(self, lattice: Lattice, values: np.ndarray) -> np.ndarray:
        """Extend ``values`` (meaningful where ``x2 >= 0``) to the whole lattice."""
        x2 = lattice.axes()[1]
        j0 = int(round(-lattice.lo[1] / lattice.h))
        if not math.isclose(x2[j0], 0.0, abs_tol=1e-12 * lattice.h):
            raise ValueError("lattice must contain the reflection row x2 = 0")
        out = values.copy()
        for j in range(j0):
            mirror = 2 * j0 - j
            out[:, j] = values[:, mirror] if mirror < lattice.shape[1] else 0.0
        return out


# ------------------------------------------------------------ test functions

@dataclass(frozen=True)
class Bump:
    """``(1 - (|z - c|/w)^2)_+^2 * (1 + a . (z - c)/w + b |z - c|^2/w^2)``."""

    center: tuple[float, float]
    width: float
    lin: tuple[float, float] = (0.0, 0.0)
    quad: float = 0.0
    scale: float = 1.0

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        z = (pts - np.asarray(self.center)) / self.width
        rr = np.sum(z * z, axis=-1)
        env = np.clip(1 - rr, 0.0, None) ** 2
        poly = 1 + z @ np.asarray(self.lin) + self.quad * rr
        return self.scale * env * poly

    @property
    def support(self) -> Ball:
        return Ball(self.center, self.width)


@dataclass(frozen=True)
class SumFunction:
    terms: tuple[Bump, ...]

    def __call__(self, pts):
        return sum(t(pts) for t in self.terms)

    @property
    def support(self) -> tuple[Ball, ...]:
        return tuple(t.support for t in self.terms)


def bump_family(region: Ball, count: int, seed: int = 0, min_width: float = 0.15,
                degree: int = 2) -> list[Bump]:
    """Random bumps compactly supported in ``region``.

    The family for ``count`` is a prefix of the family for any larger count.
    """
    rng = np.random.default_rng(seed)
    c0 = np.asarray(region.center)
    out = []
    while len(out) < count:
        w = region.radius * rng.uniform(min_width, 0.6)
        # centre uniformly in B(c0, R - w) so the support stays inside
        reach = region.radius - w
        ang = rng.uniform(0, 2 * np.pi)
        rad = reach * math.sqrt(rng.uniform())
        c = c0 + rad * np.array([math.cos(ang), math.sin(ang)])
        lin = rng.uniform(-0.5, 0.5, 2) if degree >= 1 else np.zeros(2)
        quad = float(rng.uniform(-0.4, 0.4)) if degree >= 2 else 0.0
        out.append(Bump(tuple(c.tolist()), float(w), tuple(lin.tolist()), quad))
    return out


@dataclass
class PhiEstimate:
    phi_lb: float
    ratios: list[float]  # per function, (q-norm / p-norm)^kappa; NaN if skipped
    best: int
    skipped: int
    kappa: float
    h: float
    norms: list[tuple[float, float]] = field(default_factory=list, repr=False)


def _as_region(A) -> Region:
    return A if isinstance(A, Region) else Region.of(A)


def gradient_norms(op: DemoExtensionOperator, A, f, h: float, pq: ExponentPair):
    """``(||grad E f||_{L_q(A)}, ||grad f||_{L_p(A & Omega)})`` by cell quadrature.

    Gradients are cell-centred, evaluated on the global ``h`` lattice; a cell
    belongs to a set when its centre does.
    """
    A = _as_region(A)
    lo, hi = A.bbox
    # include the mirror image so reflected values are available
    lo = np.minimum(lo, [lo[0], -hi[1]])
    hi = np.maximum(hi, [hi[0], -lo[1]])
    lat = Lattice.anchored(lo, hi, h)
    pts = lat.points()
    upper = pts[..., 1] >= 0
    raw = np.where(upper, f(pts), 0.0)
    ext = op.apply(lat, raw)
    centres = pts[:-1, :-1] + h / 2
    in_A = A.contains(centres)
    in_AO = in_A & op.in_domain(centres)
    gE = np.linalg.norm(cell_gradient(ext, h), axis=-1)
    gf = np.linalg.norm(cell_gradient(raw, h), axis=-1)
    area = h * h
    nq = float(np.sum(gE[in_A] ** pq.q) * area) ** (1 / pq.q)
    np_ = float(np.sum(gf[in_AO] ** pq.p) * area) ** (1 / pq.p)
    return nq, np_


def estimate_phi(op: DemoExtensionOperator, A, pq: ExponentPair,
                 family: Sequence[Callable] | None = None, h: float = 0.02,
                 family_size: int = 50, seed: int = 0) -> PhiEstimate:
    """Lower bound ``max_f (||grad E f||_q / ||grad f||_p)^kappa`` for ``Phi(A)``."""
    k = pq.kappa
    if family is None:
        if not isinstance(A, Ball):
            raise ValueError("a default family needs a ball region")
        if family_size < 50:
            warnings.warn("test families below 50 functions give weak bounds", stacklevel=2)
        family = bump_family(A, family_size, seed)
    ratios, norms = [], []
    skipped = 0
    for f in family:
        nq, np_ = gradient_norms(op, A, f, h, pq)
        norms.append((nq, np_))
        if np_ <= 1e-300:
            skipped += 1
            ratios.append(math.nan)
            continue
        ratios.append((nq / np_) ** k)
    if skipped:
        warnings.warn(f"skipped {skipped} test functions with vanishing p-norm", stacklevel=2)
    finite = [r if math.isfinite(r) else -INF for r in ratios]
    best = int(np.argmax(finite)) if finite else -1
    phi = max((r for r in ratios if math.isfinite(r)), default=0.0)
    return PhiEstimate(phi, ratios, best, skipped, k, h, norms)


def superpose(op: DemoExtensionOperator, parts: Sequence[tuple[object, Callable, float]],
              h: float, pq: ExponentPair) -> SumFunction:
    """Combine per-region test functions as in the additivity argument.

    Each ``(A_k, f_k, phi_k)`` is rescaled so that ``||grad f_k||_p^p = phi_k``;
    for disjoint regions the sum then has ratio^kappa equal to ``sum phi_k``
    whenever each ``f_k`` attains ``phi_k``.
    """
    terms = []
    for A, f, phi in parts:
        _, np_ = gradient_norms(op, A, f, h, pq)
        s = (phi / np_**pq.p) ** (1 / pq.p)
        fs = f.terms if isinstance(f, SumFunction) else (f,)
        terms.extend(Bump(t.center, t.width, t.lin, t.quad, t.scale * s) for t in fs)
    return SumFunction(tuple(terms))


# ---------------------------------------------------------------- L_alpha

@dataclass
class LAlphaNorm:
    value: float
    infinite_at: list[tuple[float, ...]] = field(default_factory=list)

    @property
    def infinite(self) -> bool:
        return bool(self.infinite_at)


def lalpha_norm(values, h: float, alpha: float, dim: int | None = None,
                points=None) -> LAlphaNorm:
    """``(sum v^alpha h^n)^(1/alpha)`` over node samples; NaN entries are skipped.

    Any ``+inf`` entry makes the norm infinite; its location is reported when
    ``points`` is given.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    v = np.asarray(values, float)
    n = dim if dim is not None else (v.ndim if points is None else np.asarray(points).shape[-1])
    keep = ~np.isnan(v)
    inf = np.isposinf(v) & keep
    if inf.any():
        locs = []
        if points is not None:
            locs = [tuple(map(float, p)) for p in np.asarray(points)[inf]]
        else:
            locs = [tuple(map(float, i)) for i in np.argwhere(inf)]
        return LAlphaNorm(INF, locs)
    if np.any(v[keep] < 0):
        raise ValueError("L_alpha norm of a negative field")
    total = float(np.sum(v[keep] ** alpha)) * h**n
    return LAlphaNorm(total ** (1 / alpha))
