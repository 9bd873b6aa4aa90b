"""Finite-difference Helmholtz residual loss with boundary lifting.

Two independent routes to the discrete operator live here:

* :func:`apply_discrete_operator` works on a closure-lattice field by array
  slicing (boundary values included);
* :func:`discretize` assembles the interior operator as a sparse matrix plus a
  right-hand side with the boundary contributions moved over.

Training uses the matrix route (cheap adjoint); the slicing route backs
:func:`residual` / :func:`loss` and the consistency tests.

Complex problems are carried by two real output channels (re, im).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .grid import Grid, GridSpec, build_grid
from .net import Mlp, backward, feature, forward

Field = Union[float, complex, Callable[[np.ndarray], np.ndarray]]


class StencilOrder(str, Enum):
    SECOND = "second"
    FOURTH = "fourth"


def _evaluate(fn: Field, points: np.ndarray) -> np.ndarray:
    if callable(fn):
        return np.asarray(fn(points))
    return np.full(points.shape[0], fn)


@dataclass(frozen=True)
class ProblemSpec:
    """Dirichlet problem (Laplace + kappa^2) u = f on (a, b)^d, u = g on the boundary.

    ``kappa``, ``source`` and ``boundary`` are constants or vectorized callables
    taking an (n, d) point array.
    """

    grid_spec: GridSpec
    kappa: Field
    source: Field = 0.0
    boundary: Field = 0.0
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    complex_valued: bool = False
    name: str = ""

    @property
    def channels(self) -> int:
        return 2 if self.complex_valued else 1

    def kappa_sq(self, points: np.ndarray) -> np.ndarray:
        k = _evaluate(self.kappa, points).astype(np.float64)
        return k * k

    def f(self, points: np.ndarray) -> np.ndarray:
        return _evaluate(self.source, points).astype(self.dtype)

    def g(self, points: np.ndarray) -> np.ndarray:
        return _evaluate(self.boundary, points).astype(self.dtype)

    @property
    def dtype(self):
        return np.complex128 if self.complex_valued else np.float64


# channel packing ---------------------------------------------------------

def to_complex(u: np.ndarray) -> np.ndarray:
    """(n, 2) real pairs -> (n,) complex; (n, 1) or (n,) real passes through flattened."""
    u = np.asarray(u)
    if u.ndim == 2 and u.shape[1] == 2:
        return u[:, 0] + 1j * u[:, 1]
    return u.reshape(u.shape[0])


def to_channels(z: np.ndarray, channels: int) -> np.ndarray:
    z = np.asarray(z)
    if channels == 2:
        return np.stack([z.real, z.imag], axis=1)
    return np.real(z).reshape(-1, 1)


# lifting -----------------------------------------------------------------

def boundary_field(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    """Closure-shaped field holding g on the boundary layer and 0 inside."""
    out = np.zeros(grid.closure_shape, dtype=spec.dtype)
    mask = grid.boundary_mask
    out[mask] = spec.g(grid.closure_points[mask.ravel()])
    return out


def lifted_eval(model_eval: Callable[[np.ndarray], np.ndarray], spec: ProblemSpec, grid: Grid,
                points: np.ndarray) -> np.ndarray:
    """Model values at interior lattice nodes, boundary data g on the boundary layer."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    t = (pts - grid.spec.a) / grid.h
    idx = np.rint(t)
    if np.any(np.abs(t - idx) > 1e-9) or np.any(idx < 0) or np.any(idx > grid.m + 1):
        raise ValueError("points are not nodes of the lattice")
    on_boundary = np.any((idx == 0) | (idx == grid.m + 1), axis=1)
    out = np.zeros(pts.shape[0], dtype=spec.dtype)
    if on_boundary.any():
        out[on_boundary] = spec.g(pts[on_boundary])
    inside = ~on_boundary
    if inside.any():
        vals = np.asarray(model_eval(pts[inside])).reshape(int(inside.sum()), -1)
        out[inside] = to_complex(vals) if spec.complex_valued else vals[:, 0]
    return out


# operator, slicing route -----------------------------------------------------

def apply_discrete_operator(v: np.ndarray, kappa_sq: np.ndarray | float, h: float,
                            order: StencilOrder = StencilOrder.SECOND) -> np.ndarray:
    """(A_h v) at interior nodes of a closure field ``v`` of shape (m+2,)*d.

    The fourth-order stencil drops to second order along an axis wherever the
    +/-2h neighbour would leave the lattice.  Returns a flat array in row-major
    interior order.
    """
    order = StencilOrder(order)
    v = np.asarray(v)
    d = v.ndim
    m = v.shape[0] - 2
    if order is StencilOrder.FOURTH and m < 3:
        raise ValueError("fourth-order stencil needs m >= 3")
    inner = (slice(1, -1),) * d
    centre = v[inner]
    out = np.zeros_like(centre)

    def shifted(ax, s, lo=1, hi=m + 1):
        idx = list(inner)
        idx[ax] = slice(lo + s, hi + s)
        return v[tuple(idx)]

    for ax in range(d):
        second = (shifted(ax, 1) - 2.0 * centre + shifted(ax, -1)) / h**2
        if order is StencilOrder.SECOND:
            out += second
            continue
        # closure indices 2..m-1 have both +/-2h neighbours on the lattice
        rows = [slice(None)] * d
        rows[ax] = slice(1, m - 1)
        rows = tuple(rows)
        mixed = second.copy()
        mixed[rows] = (-shifted(ax, -2, 2, m) + 16.0 * shifted(ax, -1, 2, m) - 30.0 * shifted(ax, 0, 2, m)
                       + 16.0 * shifted(ax, 1, 2, m) - shifted(ax, 2, 2, m)) / (12.0 * h**2)
        out += mixed
    ks = np.broadcast_to(np.asarray(kappa_sq).reshape(-1) if np.ndim(kappa_sq) else kappa_sq, (centre.size,))
    return out.reshape(-1) + ks * centre.reshape(-1)


# operator, matrix route ----------------------------------------------------

def _second_difference(m: int, h: float, order: StencilOrder) -> sp.csr_matrix:
    if order is StencilOrder.SECOND or m < 3:
        return sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1], format="lil") / h**2
    t = sp.lil_matrix((m, m))
    for i in range(m):
        if i == 0 or i == m - 1:
            for off, c in ((-1, 1.0), (0, -2.0), (1, 1.0)):
                if 0 <= i + off < m:
                    t[i, i + off] = c / h**2
        else:
            for off, c in ((-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0)):
                if 0 <= i + off < m:
                    t[i, i + off] = c / (12.0 * h**2)
    return t


def operator_matrix(grid: Grid, kappa_sq: np.ndarray, order: StencilOrder = StencilOrder.SECOND) -> sp.csr_matrix:
    """Interior block of A_h (Dirichlet unknowns eliminated), row-major node order."""
    order = StencilOrder(order)
    if order is StencilOrder.FOURTH and grid.m < 3:
        raise ValueError("fourth-order stencil needs m >= 3")
    m, d = grid.m, grid.d
    t = sp.csr_matrix(_second_difference(m, grid.h, order))
    eye = sp.identity(m, format="csr")
    lap = sp.csr_matrix((m**d, m**d))
    for ax in range(d):
        term = None
        for k in range(d):
            factor = t if k == ax else eye
            term = factor if term is None else sp.kron(term, factor, format="csr")
        lap = lap + term
    return (lap + sp.diags(np.asarray(kappa_sq, dtype=np.float64).reshape(-1))).tocsr()


@dataclass(eq=False)
class DiscreteSystem:
    """Interior unknowns u solve ``matrix @ u = rhs``; ``rhs`` already carries the lifted boundary data.

    ``source`` is f at the interior nodes, kept for reporting.
    """

    grid: Grid
    matrix: sp.csr_matrix
    rhs: np.ndarray
    channels: int = 1
    source: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.rhs.shape[0]

    def residual(self, u: np.ndarray) -> np.ndarray:
        """rhs - A u for complex (n,) or channel-packed (n, c) interior values."""
        z = to_complex(u) if np.ndim(u) == 2 else np.asarray(u)
        return self.rhs - self.matrix @ z

    def loss(self, u: np.ndarray) -> float:
        r = self.residual(u)
        return float(np.mean(np.abs(r) ** 2))

    def cotangent(self, r: np.ndarray) -> np.ndarray:
        """d loss / d (interior outputs) as an (n, channels) array, given residual r."""
        adj = self.matrix.conj().T @ r
        scale = -2.0 / self.n
        if self.channels == 2:
            return scale * np.stack([adj.real, adj.imag], axis=1)
        return scale * np.real(adj).reshape(-1, 1)


def discretize(spec: ProblemSpec, grid: Grid | None = None,
               order: StencilOrder = StencilOrder.SECOND) -> DiscreteSystem:
    grid = grid or build_grid(spec.grid_spec)
    pts = grid.interior_points
    ks = spec.kappa_sq(pts)
    matrix = operator_matrix(grid, ks, order)
    # boundary-only field through the slicing route gives exactly the lifted terms
    lifted = apply_discrete_operator(boundary_field(spec, grid), 0.0, grid.h, order)
    f = spec.f(pts)
    return DiscreteSystem(grid, matrix, f - lifted, spec.channels, source=f)


# loss ------------------------------------------------------------------------

def seminorm(v: np.ndarray) -> float:
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("semi-norm of an empty field")
    return float(np.sqrt(np.mean(np.abs(v) ** 2)))


def residual(model_eval: Callable[[np.ndarray], np.ndarray], spec: ProblemSpec, grid: Grid | None = None,
             order: StencilOrder = StencilOrder.SECOND) -> np.ndarray:
    """f - A_h(lifted model) at every interior node (slicing route)."""
    grid = grid or build_grid(spec.grid_spec)
    pts = grid.interior_points
    u = np.asarray(model_eval(pts))
    u = to_complex(u.reshape(pts.shape[0], -1)) if spec.complex_valued else u.reshape(-1)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("model produced non-finite values")
    full = grid.embed(u, boundary_field(spec, grid))
    return spec.f(pts) - apply_discrete_operator(full, spec.kappa_sq(pts), grid.h, order)


def loss(model_eval, spec: ProblemSpec, grid: Grid | None = None,
         order: StencilOrder = StencilOrder.SECOND) -> float:
    return seminorm(residual(model_eval, spec, grid, order)) ** 2


def loss_and_gradient(mlp: Mlp, system: DiscreteSystem, inputs: np.ndarray | None = None):
    """Loss of the lifted network and its parameter gradients (matrix route).

    ``inputs`` defaults to the interior node coordinates; pass frozen features
    to differentiate a later-grade network.
    """
    x = system.grid.interior_points if inputs is None else inputs
    out, cache = forward(mlp, x)
    r = system.residual(out)
    if not np.all(np.isfinite(r)):
        raise FloatingPointError("non-finite residual")
    value = float(np.mean(np.abs(r) ** 2))
    return value, backward(mlp, cache, system.cotangent(r))


def loss_gradient(mlp: Mlp, spec: ProblemSpec, grid: Grid | None = None,
                  order: StencilOrder = StencilOrder.SECOND) -> list[np.ndarray]:
    return loss_and_gradient(mlp, discretize(spec, grid, order))[1]


# output-layer polish ---------------------------------------------------------

@dataclass
class PolishResult:
    weight: np.ndarray
    bias: np.ndarray
    loss: float
    source: str


def system_loss(target: np.ndarray, system: DiscreteSystem, u: np.ndarray) -> float:
    """mean |target - A u|^2 for channel-packed u."""
    r = target - system.matrix @ to_complex(u)
    return float(np.mean(np.abs(r) ** 2))


def polish_output_layer(features: np.ndarray, target: np.ndarray, system: DiscreteSystem,
                        current: tuple[np.ndarray, np.ndarray] | None = None) -> PolishResult:
    """Best affine read-out of fixed ``features`` against residual ``target``.

    Minimizes mean |target - A (H W^T + b)|^2 by least squares.  The returned
    layer is the best of {least squares, ``current``, zero}, so the loss never
    exceeds that of the zero read-out.
    """
    n, w = features.shape
    c = system.channels
    design = np.hstack([features, np.ones((n, 1))])
    phi = np.asarray(system.matrix @ design)
    target = np.asarray(target)

    def evaluate(weight, bias):
        u = design @ np.vstack([weight.T, bias[None, :]])
        return system_loss(target, system, u)

    candidates = [("zero", np.zeros((c, w)), np.zeros(c), float(np.mean(np.abs(target) ** 2)))]
    if current is not None:
        cw, cb = np.asarray(current[0]), np.asarray(current[1])
        candidates.append(("trained", cw, cb, evaluate(cw, cb)))
    try:
        if c == 2:
            big = np.block([[phi.real, -phi.imag], [phi.imag, phi.real]])
            rhs = np.concatenate([target.real, target.imag])
            coef = np.linalg.lstsq(big, rhs, rcond=None)[0]
            cr, ci = coef[: w + 1], coef[w + 1:]
            weight = np.vstack([cr[:w], ci[:w]])
            bias = np.array([cr[w], ci[w]])
        else:
            coef = np.linalg.lstsq(np.real(phi), np.real(target), rcond=None)[0]
            weight, bias = coef[:w][None, :], coef[w:]
        if np.all(np.isfinite(weight)) and np.all(np.isfinite(bias)):
            candidates.append(("lstsq", weight, bias, evaluate(weight, bias)))
    except np.linalg.LinAlgError:
        pass
    name, weight, bias, value = min(candidates, key=lambda t: t[3])
    return PolishResult(np.array(weight, dtype=np.float64), np.array(bias, dtype=np.float64), value, name)


def hidden_features(mlp: Mlp, inputs: np.ndarray) -> np.ndarray:
    return feature(mlp, inputs)
