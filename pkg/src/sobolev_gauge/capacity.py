"""Variational p-capacity of ring condensers on uniform grids.

A condenser is a plate ``E`` inside a shell ``U`` within an ambient domain.
Admissible grid fields equal 1 on plate nodes and 0 on ambient nodes outside
the shell.  The discrete energy sums ``|grad f|^p h^n`` over cells whose
corners all lie in the ambient domain, with forward differences taken from
each cell's lower corner.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import cg, spsolve

from .geometry import INF, BoxDomain, Domain
from .grid import GridField, Lattice, cell_corners_all, forward_gradient
from .setfn import ExponentPair

log = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 40_000


class PlateConnectivityWarning(UserWarning):
    pass


@dataclass
class Condenser:
    plate: Domain | None  # E; None means the empty plate
    shell: Domain  # U
    ambient: Domain  # Omega

    def rasterize(self, h: float, lattice: Lattice | None = None):
        """Node masks ``(lattice, omega, plate, shell)`` on the global ``h`` grid."""
        lat = lattice or Lattice.anchored(*self.ambient.bbox, h)
        pts = lat.points()
        omega = self.ambient.contains(pts)
        shell = self.shell.contains(pts) & omega
        if self.plate is None:
            plate = np.zeros_like(omega)
        else:
            plate = self.plate.contains(pts) & omega
        return lat, omega, plate, shell


@dataclass
class CapacityResult:
    value: float
    p: float
    h: float
    iterations: int = 0
    decrement: float = 0.0
    admissible: bool = True
    converged: bool = True
    regularized_value: float | None = None
    eps: float = 0.0
    field: GridField | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {"value": self.value, "p": self.p, "h": self.h, "iterations": self.iterations,
                "decrement": self.decrement, "admissible": self.admissible,
                "converged": self.converged, "regularized_value": self.regularized_value,
                "eps": self.eps}


class _Energy:
    """``sum_c h^n (|D_c f|^2 + eps^2)^(p/2)`` restricted to free nodes."""

    def __init__(self, lat: Lattice, omega, fixed_vals, free, p, eps):
        n = lat.dim
        self.h = lat.h
        self.p = p
        self.eps = eps
        self.weight = lat.h**n
        cells = cell_corners_all(omega)
        cshape = cells.shape
        flat = np.ravel_multi_index
        cidx = np.nonzero(cells)
        base = flat(cidx, lat.shape)
        ops = []
        for axis in range(n):
            shifted = list(cidx)
            shifted[axis] = shifted[axis] + 1
            nxt = flat(tuple(shifted), lat.shape)
            m = len(base)
            rows = np.concatenate([np.arange(m), np.arange(m)])
            cols = np.concatenate([nxt, base])
            vals = np.concatenate([np.full(m, 1 / lat.h), np.full(m, -1 / lat.h)])
            ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(m, omega.size)))
        self.n_cells = len(base)
        free_idx = np.flatnonzero(free.ravel())
        self.free_idx = free_idx
        full0 = np.zeros(omega.size)
        full0[:] = fixed_vals.ravel()
        full0[free_idx] = 0.0
        self.D = [op[:, free_idx].tocsr() for op in ops]
        self.offset = [op @ full0 for op in ops]  # gradient of the fixed part
        self.fixed_full = full0
        del cshape

    def grads(self, u):
        return [D @ u + c for D, c in zip(self.D, self.offset)]

    def energy(self, u, eps=None):
        eps = self.eps if eps is None else eps
        g = self.grads(u)
        s = sum(gk * gk for gk in g) + eps * eps
        return self.weight * float(np.sum(s ** (self.p / 2)))

    def gradient_hessian(self, u):
        p = self.p
        g = self.grads(u)
        s = sum(gk * gk for gk in g) + self.eps**2
        a = p * s ** (p / 2 - 1)
        grad = self.weight * sum(D.T @ (a * gk) for D, gk in zip(self.D, g))
        H = sum(D.T @ sp.diags(a) @ D for D in self.D)
        if p != 2:
            b = p * (p - 2) * s ** (p / 2 - 2)
            for k, Dk in enumerate(self.D):
                for l, Dl in enumerate(self.D):
                    H = H + Dk.T @ sp.diags(b * g[k] * g[l]) @ Dl
        return grad, (self.weight * H).tocsr()

    def full_field(self, u):
        out = self.fixed_full.copy()
        out[self.free_idx] = u
        return out


def _solve(H, rhs):
    n = H.shape[0]
    diag = H.diagonal()
    shift = 1e-12 * (diag.max() if n else 1.0)
    H = H + sp.diags(np.full(n, shift))
    if n <= DIRECT_SOLVE_LIMIT:
        return spsolve(H.tocsc(), rhs)
    ml = pyamg.smoothed_aggregation_solver(H, symmetry="symmetric", max_coarse=500)
    x, info = cg(H, rhs, M=ml.aspreconditioner(cycle="V"), rtol=1e-10, maxiter=500)
    if info != 0:
        log.debug("CG stopped with info=%s; falling back to direct solve", info)
        x = spsolve(H.tocsc(), rhs)
    return x


def _check_plate_connectivity(plate, omega, shell):
    for name, mask in (("plate E", plate), ("zero plate", omega & ~shell)):
        if mask.any():
            _, count = ndimage.label(mask, structure=np.ones((3,) * mask.ndim))
            if count > 1:
                warnings.warn(f"{name} has {count} grid components; the admissible class "
                              "assumes connected plates", PlateConnectivityWarning, stacklevel=3)


def p_capacity(cond: Condenser, p: float, h: float, tol: float = 1e-8,
               init: np.ndarray | str | None = None, seed: int = 0,
               eps: float | None = None, max_iter: int = 200,
               lattice: Lattice | None = None, keep_field: bool = False) -> CapacityResult:
    """Minimize the discrete p-Dirichlet energy over admissible fields.

    Damped Newton with Armijo backtracking, followed by projection onto
    ``[0, 1]`` (which never increases the energy).  For ``p != 2`` the
    integrand is smoothed to ``(|g|^2 + eps^2)^(p/2)``, default
    ``eps = 1e-8``; ``value`` is the unsmoothed energy of the minimizer and
    ``regularized_value`` the smoothed one.

    ``init`` may be a free-node vector, ``"random"`` (uniform in [0, 1],
    seeded) or ``None`` (the p = 2 minimizer).
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if eps is None:
        eps = 0.0 if p == 2 else 1e-8
    lat, omega, plate, shell = cond.rasterize(h, lattice)
    if not plate.any():
        return CapacityResult(0.0, p, h, admissible=True, regularized_value=0.0, eps=eps)
    if np.any(plate & ~shell):
        return CapacityResult(INF, p, h, admissible=False, eps=eps)
    _check_plate_connectivity(plate, omega, shell)

    free = shell & ~plate
    fixed = plate.astype(float)
    prob = _Energy(lat, omega, fixed, free, p, eps)
    nfree = len(prob.free_idx)

    if isinstance(init, str) and init == "random":
        u = np.random.default_rng(seed).random(nfree)
    elif init is None:
        u = np.zeros(nfree)
        if nfree and p != 2:
            lin = _Energy(lat, omega, fixed, free, 2.0, 0.0)
            u = np.clip(_newton(lin, u, tol, max_iter)[0], 0.0, 1.0)
    else:
        u = np.asarray(init, float).copy()

    u, iters, dec, converged = _newton(prob, u, tol, max_iter) if nfree else (u, 0, 0.0, True)
    value = prob.energy(u, eps=0.0)
    reg = prob.energy(u)
    result = CapacityResult(value, p, h, iters, dec, True, converged, reg, eps)
    if keep_field:
        values = prob.full_field(u).reshape(lat.shape)
        result.field = GridField(lat, np.where(omega, values, np.nan), omega)
    return result


def _newton(prob: _Energy, u, tol, max_iter):
    E = prob.energy(u)
    dec = math.inf
    for it in range(1, max_iter + 1):
        grad, H = prob.gradient_hessian(u)
        step = -_solve(H, grad)
        slope = float(grad @ step)
        if slope >= 0:  # not a descent direction: fall back to steepest descent
            step = -grad
            slope = -float(grad @ grad)
        t = 1.0
        while True:
            trial = np.clip(u + t * step, 0.0, 1.0)
            Et = prob.energy(trial)
            if Et <= E + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        dec = (E - Et) / max(abs(E), 1e-300)
        u, E = trial, min(Et, E)
        newton_dec = -slope / max(abs(E), 1e-300)
        if abs(dec) < tol and newton_dec < 10 * tol:
            return u, it, dec, True
    return u, max_iter, dec, False


def ring_in_space(plate: Domain, shell: Domain, h: float, pad: int = 2) -> Condenser:
    """Condenser ``(E, U)`` in R^n, with ambient box = bbox(U) padded by ``pad`` cells."""
    lo, hi = shell.bbox
    return Condenser(plate, shell, BoxDomain(lo - pad * h, hi + pad * h))


@dataclass
class CapacityPhiBound:
    phi_lb: float
    cap_q: CapacityResult
    cap_p: CapacityResult
    kappa: float
    note: str = ""


def capacity_phi_lower_bound(domain: Domain, shell: Domain, plate: Domain,
                             pq: ExponentPair, h: float, tol: float = 1e-8,
                             **kw) -> CapacityPhiBound:
    """``Phi(U) >= (cap_q(E, U)^(1/q) / cap_p(E, U & Omega)^(1/p))^kappa``."""
    if not pq.q < pq.p:
        raise ValueError("capacity bound needs q < p")
    if pq.q <= 1:
        raise ValueError("capacity needs q > 1")
    space = ring_in_space(plate, shell, h)
    # one global lattice so both rasterizations agree on shared nodes
    lo = np.minimum(space.ambient.bbox[0], domain.bbox[0])
    hi = np.maximum(space.ambient.bbox[1], domain.bbox[1])
    lat = Lattice.anchored(lo, hi, h)
    cap_q = p_capacity(space, pq.q, h, tol, lattice=lat, **kw)
    cap_p = p_capacity(Condenser(plate, shell, domain), pq.p, h, tol, lattice=lat, **kw)
    kappa = pq.kappa
    if not cap_p.admissible:
        return CapacityPhiBound(0.0, cap_q, cap_p, kappa, "cap_p infinite: bound is trivial")
    if cap_q.value == 0:
        return CapacityPhiBound(0.0, cap_q, cap_p, kappa, "cap_q vanishes")
    if cap_p.value == 0:
        return CapacityPhiBound(INF, cap_q, cap_p, kappa,
                                "cap_p vanishes with cap_q > 0: no extension at these exponents")
    log_ratio = math.log(cap_q.value) / pq.q - math.log(cap_p.value) / pq.p
    return CapacityPhiBound(math.exp(kappa * log_ratio), cap_q, cap_p, kappa)
