"""Intrinsic (geodesic) distances on grid graphs.

Lattice nodes inside the domain are joined by straight edges whose segment
stays inside the domain (checked at spacing <= h/4).  Shortest paths use
the edge Euclidean lengths, so discrete distances overestimate the
intrinsic metric by at most the stencil's metrication factor
``1 + STENCIL_EPS[stencil]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .geometry import INF, Domain
from .grid import GridField, Lattice, cell_gradient

# worst-case overestimate of a straight segment: 1/cos(half the widest gap
# between neighbouring stencil directions)
STENCIL_EPS = {
    8: 1 / math.cos(math.pi / 8) - 1,
    16: 1 / math.cos(math.atan(0.5) / 2) - 1,
}
# Cell-centred gradients only see a cell's axis edges and diagonals, i.e. an
# 8-neighbour stencil; 1-Lipschitz data on those edges keeps the gradient
# below 1 + this bound whatever stencil built the distances.
CELL_GRADIENT_EPS = STENCIL_EPS[8]


class GridResolutionWarning(UserWarning):
    pass


class DomainUnresolved(ValueError):
    pass


class EndpointUnresolved(ValueError):
    pass


class ScaleUnresolved(ValueError):
    pass


def stencil_offsets(stencil: int, dim: int) -> list[tuple[int, ...]]:
    """Half of the symmetric neighbour set (the other half is implied)."""
    if stencil == 8:
        full = np.array(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij")).reshape(dim, -1).T
    elif stencil == 16:
        if dim != 2:
            raise ValueError("the 16-neighbour stencil is planar only")
        full = np.array([(a, b) for a in range(-2, 3) for b in range(-2, 3)
                         if (a, b) != (0, 0) and max(abs(a), abs(b)) <= 2
                         and math.gcd(abs(a), abs(b)) == 1])
    else:
        raise ValueError(f"stencil must be 8 or 16, got {stencil}")
    half = []
    for off in map(tuple, full.tolist()):
        nz = next((v for v in off if v != 0), 0)
        if nz > 0:
            half.append(off)
    return sorted(half)


@dataclass
class GridGraph:
    domain: Domain
    lattice: Lattice
    stencil: int
    node_index: np.ndarray  # lattice-shaped, -1 where unoccupied
    coords: np.ndarray
    adjacency: csr_matrix
    edge_masks: dict[tuple[int, ...], np.ndarray]
    labels: np.ndarray
    n_components: int
    warnings: list[str] = field(default_factory=list)
    _tree: cKDTree | None = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return self.lattice.h

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def eps(self) -> float:
        return STENCIL_EPS[self.stencil]

    @property
    def snap_tolerance(self) -> float:
        return 2 * self.h * math.sqrt(self.lattice.dim)

    def snap(self, x) -> tuple[int, float]:
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        dist, idx = self._tree.query(np.asarray(x, float))
        if dist > self.snap_tolerance:
            raise EndpointUnresolved(
                f"endpoint unresolved: {tuple(np.asarray(x).tolist())} is {dist:.3g} from the "
                f"nearest node (tolerance {self.snap_tolerance:.3g})")
        return int(idx), float(dist)

    def distances_from(self, sources, limit: float = INF) -> np.ndarray:
        sources = np.atleast_1d(np.asarray(sources, dtype=int))
        return dijkstra(self.adjacency, directed=False, indices=sources,
                        min_only=True, limit=limit)

    def field(self, node_values: np.ndarray) -> GridField:
        values = np.full(self.lattice.shape, np.nan)
        mask = self.node_index >= 0
        values[mask] = node_values[self.node_index[mask]]
        return GridField(self.lattice, values, mask)


def _segment_ok(domain: Domain, a: np.ndarray, b: np.ndarray, steps: int) -> np.ndarray:
    ok = np.ones(len(a), dtype=bool)
    step = b - a
    for k in range(1, steps):
        ok &= domain.contains(a + (k / steps) * step)
    return ok


def build_grid_graph(domain: Domain, h: float, stencil: int = 8,
                     check_resolution: bool = True) -> GridGraph:
    if not h > 0:
        raise ValueError("h must be positive")
    lo, hi = domain.bbox
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("domain bbox must be finite")
    lat = Lattice.covering(lo, hi, h)
    pts = lat.points()
    occ = domain.contains(pts)
    n_nodes = int(occ.sum())
    if n_nodes == 0:
        raise DomainUnresolved("domain not resolved at this h")
    node_index = np.full(lat.shape, -1, dtype=np.int64)
    node_index[occ] = np.arange(n_nodes)
    coords = pts[occ]

    rows, cols, weights = [], [], []
    edge_masks = {}
    shape = np.asarray(lat.shape)
    for off in stencil_offsets(stencil, lat.dim):
        o = np.asarray(off)
        src_sl = tuple(slice(max(0, -v), s - max(0, v)) for v, s in zip(o, shape))
        dst_sl = tuple(slice(max(0, v), s - max(0, -v)) for v, s in zip(o, shape))
        both = occ[src_sl] & occ[dst_sl]
        src = node_index[src_sl][both]
        dst = node_index[dst_sl][both]
        length = float(np.linalg.norm(o)) * h
        steps = max(2, math.ceil(4 * float(np.linalg.norm(o))))
        ok = _segment_ok(domain, coords[src], coords[dst], steps)
        full = np.zeros(lat.shape, dtype=bool)
        view = full[src_sl]
        view[both] = ok
        edge_masks[off] = full
        rows.append(src[ok])
        cols.append(dst[ok])
        weights.append(np.full(int(ok.sum()), length))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    w = np.concatenate(weights)
    adj = coo_matrix((np.concatenate([w, w]), (np.concatenate([rows, cols]),
                                               np.concatenate([cols, rows]))),
                     shape=(n_nodes, n_nodes)).tocsr()
    n_comp, labels = connected_components(adj, directed=False)
    graph = GridGraph(domain, lat, stencil, node_index, coords, adj, edge_masks,
                      labels, int(n_comp))
    if check_resolution:
        _check_resolution(graph)
    return graph


def _check_resolution(graph: GridGraph, n_probe: int = 2**14) -> None:
    """Warn when parts of the domain lie more than one cell diagonal from every node."""
    lo, hi = graph.domain.bbox
    probe = qmc.scale(qmc.Halton(graph.lattice.dim, scramble=False).random(n_probe + 1)[1:], lo, hi)
    probe = probe[graph.domain.contains(probe)]
    if not len(probe):
        return
    dist, _ = cKDTree(graph.coords).query(probe)
    lost = dist > graph.h * math.sqrt(graph.lattice.dim)
    if lost.any():
        far = probe[lost]
        msg = (f"{int(lost.sum())} of {len(lost)} sampled domain points are unresolved at h={graph.h:g} "
               f"(region {far.min(axis=0).round(4).tolist()}..{far.max(axis=0).round(4).tolist()})")
        graph.warnings.append(msg)
        warnings.warn(msg, GridResolutionWarning, stacklevel=3)


@dataclass
class MetricReport:
    d_omega: float
    d_euclid: float
    ratio: float
    stencil: int
    h: float
    reachable: bool
    snap_x: float = 0.0
    snap_y: float = 0.0

    def row(self) -> dict:
        return {"d_omega": self.d_omega, "d_euclid": self.d_euclid, "ratio": self.ratio,
                "reachable": self.reachable, "snap_x": self.snap_x, "snap_y": self.snap_y}


def _graph_for(domain, h, stencil, graph):
    if graph is not None:
        return graph
    return build_grid_graph(domain, h, stencil)


def intrinsic_distance(domain: Domain, x, y, h: float = 0.02, stencil: int = 8,
                       graph: GridGraph | None = None) -> MetricReport:
    g = _graph_for(domain, h, stencil, graph)
    sx, dx = g.snap(x)
    sy, dy = g.snap(y)
    d_euclid = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if g.labels[sx] != g.labels[sy]:
        d = INF
    else:
        d = float(g.distances_from(sx)[sy])
    reachable = math.isfinite(d)
    ratio = d / d_euclid if d_euclid > 0 else (1.0 if d == 0 else INF)
    return MetricReport(d, d_euclid, ratio, g.stencil, g.h, reachable, dx, dy)


def metric_ratio(domain: Domain, x, y, h: float = 0.02, stencil: int = 8,
                 graph: GridGraph | None = None) -> float:
    """``d_Omega(x, y) / |x - y|`` with the unsnapped Euclidean distance."""
    if np.allclose(np.asarray(x, float), np.asarray(y, float), rtol=0, atol=0):
        raise ValueError("metric ratio needs distinct points")
    return intrinsic_distance(domain, x, y, h, stencil, graph).ratio


def sphere_directions(dim: int, count: int) -> np.ndarray:
    if dim == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    if dim == 3:
        # Fibonacci lattice on S^2
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        s = np.sqrt(1 - z**2)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    raise ValueError("directions supported for n in {2, 3}")


@dataclass
class ScaleRatios:
    sup: float
    inf: float
    ratios: list[float]
    used: int
    skipped: int


def m_at_scale(domain: Domain, x, r: float, h: float = 0.02, stencil: int = 8,
               directions: int = 16, graph: GridGraph | None = None,
               search_factor: float | None = None) -> ScaleRatios:
    """sup and inf of ``d_Omega(x, y)/|x - y|`` over sampled ``|y - x| = r``.

    ``search_factor`` bounds the shortest-path sweep to ``search_factor * r``;
    targets beyond it in the same component trigger a full sweep.
    """
    if directions < 16:
        raise ValueError("need at least 16 directions")
    g = _graph_for(domain, h, stencil, graph)
    x = np.asarray(x, float)
    ys = x + r * sphere_directions(len(x), directions)
    ys = ys[domain.contains(ys)]
    sx, _ = g.snap(x)
    targets = []
    skipped = 0
    for y in ys:
        try:
            targets.append(g.snap(y)[0])
        except EndpointUnresolved:
            skipped += 1
    if not targets:
        raise ScaleUnresolved(f"scale unresolved: no sampled point at r={r:g} lies on the grid")
    targets = np.asarray(targets)
    limit = INF if search_factor is None else search_factor * r
    dist = g.distances_from(sx, limit=limit)[targets]
    same = g.labels[targets] == g.labels[sx]
    if np.any(same & ~np.isfinite(dist)):
        dist = g.distances_from(sx)[targets]
    dist = np.where(same, dist, INF)
    ratios = (dist / r).tolist()
    return ScaleRatios(max(ratios), min(ratios), ratios, len(targets), skipped)


# Väisälä test function -------------------------------------------------------

@dataclass
class TestFunctionField:
    graph: GridGraph
    values: np.ndarray  # per node
    x_node: int
    y_node: int
    radius: float
    far_nodes: np.ndarray

    __test__ = False  # not a pytest class

    def field(self) -> GridField:
        return self.graph.field(self.values)


@dataclass
class VaisalaReport:
    radius: float
    eps: float
    f_min: float
    f_max: float
    f_x: float
    f_y: float
    max_edge_excess: float  # max of R|f(u)-f(v)|/w(u,v); <= 1 expected
    support_radius: float  # max |t - x| over f(t) > 0, relative to R
    max_gradient: float  # max cell gradient times R
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def vaisala_test_function(domain: Domain, x, y, h: float = 0.02, stencil: int = 8,
                          graph: GridGraph | None = None):
    """Build ``f(t) = min(1, d(t, far set) / d(x, y))`` and verify its properties.

    The far set collects nodes with ``d(x, .) >= d(x, y)``.  Returns the
    field and a :class:`VaisalaReport`.
    """
    g = _graph_for(domain, h, stencil, graph)
    sx, _ = g.snap(x)
    sy, _ = g.snap(y)
    if sx == sy:
        raise ValueError("x and y snap to the same node")
    dist_x = g.distances_from(sx)
    R = float(dist_x[sy])
    if not math.isfinite(R):
        raise EndpointUnresolved("y is unreachable from x")
    far = np.flatnonzero(dist_x >= R)
    dist_far = g.distances_from(far)
    f = np.minimum(1.0, dist_far / R)
    # d(t, far) >= R is exact for t = x; reversed path sums can round below R
    f[dist_far >= R * (1 - 1e-12)] = 1.0
    tf = TestFunctionField(g, f, sx, sy, R, far)
    return tf, _vaisala_report(tf)


def _vaisala_report(tf: TestFunctionField) -> VaisalaReport:
    g = tf.graph
    R = tf.radius
    eps = g.eps
    f = tf.values
    adj = g.adjacency.tocoo()
    excess = R * np.abs(f[adj.row] - f[adj.col]) / adj.data
    max_excess = float(excess.max()) if len(excess) else 0.0

    pos = f > 0
    centre = g.coords[tf.x_node]
    support = float(np.linalg.norm(g.coords[pos] - centre, axis=1).max() / R) if pos.any() else 0.0

    norms = np.linalg.norm(cell_gradient(g.field(f).values, g.h), axis=-1)
    norms[~admissible_cells(g)] = np.nan
    max_grad = float(np.nanmax(norms) * R) if np.isfinite(norms).any() else 0.0

    tol = 1e-12
    checks = {
        "range": bool(f.min() >= 0 and f.max() <= 1),
        "f_x_is_1": bool(f[tf.x_node] == 1.0),
        "f_y_is_0": bool(f[tf.y_node] == 0.0),
        "edge_lipschitz": max_excess <= 1 + eps + tol,
        "support": support < 1 + eps,
        "gradient": max_grad <= 1 + max(eps, CELL_GRADIENT_EPS) + tol,
    }
    return VaisalaReport(R, eps, float(f.min()), float(f.max()), float(f[tf.x_node]),
                         float(f[tf.y_node]), max_excess, support, max_grad, checks)


def admissible_cells(g: GridGraph) -> np.ndarray:
    """Cells whose internal neighbour pairs (axis edges, diagonals) are all graph edges."""
    dim = g.lattice.dim
    shape = g.lattice.shape
    cell_ok = np.ones(tuple(s - 1 for s in shape), dtype=bool)
    for off, mask in g.edge_masks.items():
        o = np.asarray(off)
        if np.any(np.abs(o) > 1):
            continue
        for corner in np.ndindex(*(2,) * dim):
            start = np.asarray(corner)
            end = start + o
            if np.any(end < 0) or np.any(end > 1):
                continue
            sl = tuple(slice(a, a + n - 1) for a, n in zip(start, shape))
            cell_ok &= mask[sl]
    return cell_ok
