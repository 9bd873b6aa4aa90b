"""Tensor-product lattices on the cube (a, b)^d.

Interior nodes carry multi-indices j in {1..m}^d; the closure lattice adds the
boundary layer j_i in {0, m+1}.  Interior nodes are ordered row-major with the
last axis fastest, which is numpy's C order for an array of shape (m,)*d.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    a: float
    b: float
    m: int
    d: int

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"need integer m >= 1, got {self.m}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.m + 1)

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "m": self.m, "d": self.d}


@dataclass(frozen=True)
class CellLocation:
    cell_index: tuple[int, ...]
    local_coords: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    axis: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def n_interior(self) -> int:
        return self.m**self.d

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def closure_shape(self) -> tuple[int, ...]:
        return (self.m + 2,) * self.d

    @cached_property
    def interior_points(self) -> np.ndarray:
        """(m^d, d) coordinates in flat-index order."""
        return _mesh(self.axis[1:-1], self.d)

    @cached_property
    def closure_points(self) -> np.ndarray:
        """((m+2)^d, d) coordinates of every lattice node, C order."""
        return _mesh(self.axis, self.d)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Boolean array of closure shape, True on the boundary layer."""
        mask = np.zeros(self.closure_shape, dtype=bool)
        for ax in range(self.d):
            idx = [slice(None)] * self.d
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def boundary_points(self) -> np.ndarray:
        return self.closure_points[self.boundary_mask.ravel()]

    def embed(self, interior_values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
        """Assemble a closure field from flat interior values and a closure-shaped boundary field.

        Trailing channel axes of ``interior_values`` are preserved.
        """
        interior_values = np.asarray(interior_values)
        extra = interior_values.shape[1:]
        full = np.array(boundary_values, dtype=np.result_type(interior_values, boundary_values), copy=True)
        full = full.reshape(self.closure_shape + extra)
        full[(slice(1, -1),) * self.d] = interior_values.reshape(self.interior_shape + extra)
        return full


def _mesh(axis: np.ndarray, d: int) -> np.ndarray:
    cols = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([c.ravel() for c in cols], axis=1)


def build_grid(spec: GridSpec) -> Grid:
    axis = spec.a + np.arange(spec.m + 2, dtype=np.float64) * spec.h
    axis[-1] = spec.b
    axis.setflags(write=False)
    return Grid(spec=spec, axis=axis)


def flat_index(grid: Grid, j) -> int:
    """Row-major position of the interior multi-index j (components 1..m)."""
    j = tuple(int(c) for c in j)
    if len(j) != grid.d:
        raise ValueError(f"multi-index {j} has wrong length for d={grid.d}")
    if any(c < 1 or c > grid.m for c in j):
        raise IndexError(f"multi-index {j} outside 1..{grid.m}")
    return int(np.ravel_multi_index(tuple(c - 1 for c in j), grid.interior_shape))


def multi_index(grid: Grid, k: int) -> tuple[int, ...]:
    """Inverse of :func:`flat_index`."""
    if not 0 <= k < grid.n_interior:
        raise IndexError(f"flat index {k} outside 0..{grid.n_interior - 1}")
    return tuple(int(c) + 1 for c in np.unravel_index(k, grid.interior_shape))


def locate_cells(grid: Grid, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized cell lookup: (n, d) points -> (n, d) lower-corner indices and (n, d) local coords.

    A point on an interior face belongs to the cell above it (xi = 0); the
    upper domain edge is folded into the last cell (xi = 1).
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != grid.d:
        raise ValueError(f"points must have shape (n, {grid.d}), got {p.shape}")
    a, b, h = grid.spec.a, grid.spec.b, grid.h
    tol = 1e-12 * (b - a)
    if np.any(p < a - tol) or np.any(p > b + tol):
        raise ValueError(f"points outside [{a}, {b}]^{grid.d}")
    t = (np.clip(p, a, b) - a) / h
    j = np.floor(t).astype(int)
    # a point a hair below a node (rounding) snaps onto that node
    j = np.where(np.isclose(t, j + 1, rtol=0.0, atol=1e-12), j + 1, j)
    j = np.clip(j, 0, grid.m)
    xi = np.clip((p - grid.axis[j]) / h, 0.0, 1.0)
    return j, xi


def locate_cell(grid: Grid, p) -> CellLocation:
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if p.shape != (grid.d,):
        raise ValueError(f"point {p} does not have dimension {grid.d}")
    j, xi = locate_cells(grid, p[None, :])
    return CellLocation(tuple(int(c) for c in j[0]), tuple(float(c) for c in xi[0]))
