"""Classical finite-difference baseline: assemble, solve, interpolate off-grid."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, build_grid, locate_cells
from .helmholtz import DiscreteSystem, ProblemSpec, StencilOrder, boundary_field, discretize
from .metrics import rse

DENSE_LIMIT = 4096


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(eq=False)
class SparseSystem:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    rhs: np.ndarray
    grid: Grid | None = None

    @property
    def n(self) -> int:
        return self.rhs.shape[0]

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.n, self.n))

    @classmethod
    def from_matrix(cls, matrix, rhs, grid: Grid | None = None) -> "SparseSystem":
        coo = sp.coo_matrix(matrix)
        # canonical (row, col) order so dumps are stable
        order = np.lexsort((coo.col, coo.row))
        return cls(coo.row[order].astype(np.int64), coo.col[order].astype(np.int64), coo.data[order],
                   np.asarray(rhs), grid)


@dataclass(eq=False)
class FdmSolution:
    grid: Grid
    values: np.ndarray  # interior, flat order
    closure: np.ndarray  # (m+2,)*d including boundary data
    residual: float = 0.0
    method: str = ""


class InterpolationKind(str, Enum):
    MULTILINEAR = "multilinear"
    TENSOR_QUADRATIC = "tensor_quadratic"


def assemble(spec: ProblemSpec, grid: Grid | None = None, order: StencilOrder = StencilOrder.SECOND) -> SparseSystem:
    grid = grid or build_grid(spec.grid_spec)
    system = discretize(spec, grid, order)
    return SparseSystem.from_matrix(system.matrix, system.rhs, grid)


def _as_sparse(system: SparseSystem | DiscreteSystem):
    if isinstance(system, DiscreteSystem):
        return system.matrix.tocsr(), np.asarray(system.rhs)
    return system.matrix(), np.asarray(system.rhs)


def solve_linear(matrix, rhs, method: str = "auto", tol: float = 1e-10) -> tuple[np.ndarray, float, str]:
    """Direct solve (dense up to DENSE_LIMIT unknowns, sparse LU above) or BiCGSTAB."""
    n = rhs.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "splu"
    if method == "dense":
        x = np.linalg.solve(matrix.toarray(), rhs)
    elif method == "splu":
        x = spla.splu(sp.csc_matrix(matrix)).solve(rhs)
    elif method == "bicgstab":
        x, info = spla.bicgstab(matrix, rhs, rtol=tol, atol=0.0, maxiter=10 * n)
    else:
        raise ValueError(f"unknown solver {method!r}")
    norm = np.linalg.norm(rhs)
    res = float(np.linalg.norm(matrix @ x - rhs) / (norm if norm else 1.0))
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(f"{method} solve left relative residual {res:.3e}", res)
    return x, res, method


def solve_sparse(system: SparseSystem, spec: ProblemSpec | None = None, method: str = "auto",
                 tol: float = 1e-10) -> FdmSolution:
    matrix, rhs = _as_sparse(system)
    x, res, used = solve_linear(matrix, rhs, method, tol)
    grid = system.grid
    if grid is None:
        raise ValueError("system carries no grid")
    bfield = boundary_field(spec, grid) if spec is not None else np.zeros(grid.closure_shape, dtype=x.dtype)
    return FdmSolution(grid, x, grid.embed(x, bfield), res, used)


# interpolation ------------------------------------------------------------------

def quadratic_basis(xi: np.ndarray) -> np.ndarray:
    """Lagrange basis on reference nodes {0, 1/2, 1}; returns (..., 3)."""
    xi = np.asarray(xi, dtype=np.float64)
    return np.stack([2.0 * (xi - 0.5) * (xi - 1.0), -4.0 * xi * (xi - 1.0), 2.0 * xi * (xi - 0.5)], axis=-1)


def linear_basis(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64)
    return np.stack([1.0 - xi, xi], axis=-1)


def _tensor_sum(closure: np.ndarray, start: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """sum over the local patch of prod_i basis_i[alpha_i] * closure[start + alpha]."""
    n, d = start.shape
    k = basis.shape[-1]
    out = np.zeros(n, dtype=closure.dtype)
    for alpha in np.ndindex(*(k,) * d):
        w = np.ones(n)
        for ax in range(d):
            w = w * basis[:, ax, alpha[ax]]
        out = out + w * closure[tuple(start[:, ax] + alpha[ax] for ax in range(d))]
    return out


def interpolate_field(grid: Grid, closure: np.ndarray, points, kind: InterpolationKind) -> np.ndarray:
    kind = InterpolationKind(kind)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    j, xi = locate_cells(grid, pts)
    if kind is InterpolationKind.MULTILINEAR:
        return _tensor_sum(closure, j, linear_basis(xi))
    if grid.m + 2 < 3:
        raise ValueError("quadratic patch needs at least 3 nodes per axis")
    # patches span two cells and start on even node indices, clamped inside the lattice
    start = np.minimum(j - (j % 2), grid.m - 1)
    local = (pts - grid.axis[start]) / (2.0 * grid.h)
    return _tensor_sum(closure, start, quadratic_basis(local))


def interpolate(sol: FdmSolution, points, kind: InterpolationKind = InterpolationKind.MULTILINEAR) -> np.ndarray:
    """Values at arbitrary points of the closed domain; a single point returns a length-1 array."""
    return interpolate_field(sol.grid, sol.closure, points, kind)


def fdm_reference_run(spec: ProblemSpec, grid: Grid | None = None, test_points: np.ndarray | None = None,
                      kinds=(InterpolationKind.MULTILINEAR, InterpolationKind.TENSOR_QUADRATIC),
                      order: StencilOrder = StencilOrder.SECOND, method: str = "auto") -> dict:
    if spec.exact is None:
        raise ValueError("reference run needs an exact solution")
    grid = grid or build_grid(spec.grid_spec)
    sol = solve_sparse(assemble(spec, grid, order), spec, method)
    out = {"tr_rse": rse(sol.values, spec.exact(grid.interior_points)), "solver": sol.method,
           "solver_residual": sol.residual}
    if test_points is not None:
        exact = spec.exact(test_points)
        for kind in kinds:
            out[f"te_rse_{InterpolationKind(kind).value}"] = rse(interpolate(sol, test_points, kind), exact)
    out["solution"] = sol
    return out


# exports ------------------------------------------------------------------------

def dump_system(system: SparseSystem, directory: str | Path) -> None:
    """Write triplets.csv (row,col,value[,value_imag]) and rhs.csv (row,value[,value_imag])."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cplx = np.iscomplexobj(system.values) or np.iscomplexobj(system.rhs)
    with open(directory / "triplets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"] + (["value_imag"] if cplx else []))
        for r, c, v in zip(system.rows, system.cols, system.values):
            w.writerow([int(r), int(c), repr(float(np.real(v)))] + ([repr(float(np.imag(v)))] if cplx else []))
    with open(directory / "rhs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "value"] + (["value_imag"] if cplx else []))
        for r, v in enumerate(system.rhs):
            w.writerow([r, repr(float(np.real(v)))] + ([repr(float(np.imag(v)))] if cplx else []))


def write_field_csv(path: str | Path, points: np.ndarray, values: np.ndarray, names: tuple[str, ...] | None = None,
                    value_names: tuple[str, ...] | None = None) -> None:
    """One row per node: coordinates then value (and value_imag for complex fields)."""
    points = np.atleast_2d(points)
    d = points.shape[1]
    names = names or ("x", "y", "z")[:d]
    values = np.asarray(values)
    cplx = np.iscomplexobj(values)
    value_names = value_names or (("value", "value_imag") if cplx else ("value",))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + list(value_names))
        for p, v in zip(points, values):
            row = [repr(float(c)) for c in p] + [repr(float(np.real(v)))]
            if cplx:
                row.append(repr(float(np.imag(v))))
            w.writerow(row)
