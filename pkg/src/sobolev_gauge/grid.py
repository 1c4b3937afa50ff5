"""Uniform lattices and scalar fields sampled on them."""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np


def max_workers() -> int:
    """Thread cap from ``SOBOLEV_GAUGE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SOBOLEV_GAUGE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Lattice:
    """Points ``lo + i * h`` for multi-indices ``0 <= i < shape``."""

    lo: tuple[float, ...]
    h: float
    shape: tuple[int, ...]

    @classmethod
    def covering(cls, lo, hi, h: float, offset: float = 0.0) -> "Lattice":
        if not h > 0:
            raise ValueError("grid spacing must be positive")
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        start = lo + offset * h
        shape = tuple(int(np.floor((b - a) / h + 1e-9)) + 1 for a, b in zip(start, hi))
        return cls(tuple(start.tolist()), float(h), shape)

    @classmethod
    def anchored(cls, lo, hi, h: float) -> "Lattice":
        """Lattice on the global grid ``h * Z^n`` covering ``[lo, hi]``."""
        i0 = np.floor(np.asarray(lo, float) / h).astype(int)
        i1 = np.ceil(np.asarray(hi, float) / h).astype(int)
        return cls(tuple((i0 * h).tolist()), float(h), tuple((i1 - i0 + 1).tolist()))

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axes(self) -> list[np.ndarray]:
        return [a + self.h * np.arange(n) for a, n in zip(self.lo, self.shape)]

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, idx) -> np.ndarray:
        return np.asarray(self.lo) + self.h * np.asarray(idx, float)


def cell_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Cell-centred gradient: per axis, the mean of the 2^(n-1) edge differences.

    ``values`` has lattice shape; the result has shape ``(s - 1 for s in
    shape) + (n,)`` and is NaN wherever a corner value is NaN.
    """
    n = values.ndim
    grads = []
    for axis in range(n):
        diff = np.diff(values, axis=axis) / h
        # average over the remaining axes' two cell faces
        for other in range(n):
            if other != axis:
                diff = 0.5 * (diff.take(range(diff.shape[other] - 1), axis=other)
                              + diff.take(range(1, diff.shape[other]), axis=other))
        grads.append(diff)
    return np.stack(grads, axis=-1)


def forward_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Per-cell forward differences from the lower corner."""
    n = values.ndim
    base = values[tuple(slice(0, -1) for _ in range(n))]
    grads = []
    for axis in range(n):
        sl = tuple(slice(1, None) if k == axis else slice(0, -1) for k in range(n))
        grads.append((values[sl] - base) / h)
    return np.stack(grads, axis=-1)


def cell_corners_all(mask: np.ndarray) -> np.ndarray:
    """True for cells whose 2^n corners are all set in ``mask``."""
    n = mask.ndim
    out = np.ones(tuple(s - 1 for s in mask.shape), dtype=bool)
    for corner in itertools.product((0, 1), repeat=n):
        sl = tuple(slice(c, s - 1 + c) for c, s in zip(corner, mask.shape))
        out &= mask[sl]
    return out


@dataclass
class GridField:
    """Scalar field on ``lattice`` nodes where ``mask`` holds; NaN elsewhere."""

    lattice: Lattice
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.lattice.shape or self.mask.shape != self.lattice.shape:
            raise ValueError("field and mask must match the lattice shape")

    def gradient(self) -> np.ndarray:
        return cell_gradient(np.where(self.mask, self.values, np.nan), self.lattice.h)

    def at(self, x) -> float:
        idx = np.rint((np.asarray(x, float) - np.asarray(self.lattice.lo)) / self.lattice.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.lattice.shape)):
            raise IndexError("point outside lattice")
        idx = tuple(idx)
        return float(self.values[idx]) if self.mask[idx] else float("nan")
