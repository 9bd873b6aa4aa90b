"""Heterogeneous benchmark: layered velocity model, PML collar, point source.

The physical square [x0, x1]^2 is padded by a PML collar of ``collar`` nodes on
every side; the outer edge of the collar carries u = 0.  Node axis 0 is x
(horizontal), axis 1 is y (depth, increasing downward).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid, GridSpec, build_grid
from .helmholtz import DiscreteSystem
from .mgdl import AdaptiveConfig, MgdlModel, cumulative_eval, run_adaptive
from .report import RunReport


# velocity ---------------------------------------------------------------------

def concave_profile(depth: float, dip: float = 400.0, centre: float = 1000.0,
                    span: float = 800.0) -> Callable[[np.ndarray], np.ndarray]:
    """Interface depth y(x): flat at ``depth``, with a parabolic dip of ``dip`` over ``span`` around ``centre``."""
    half = span / 2.0

    def profile(x):
        x = np.asarray(x, dtype=np.float64)
        s = (x - centre) / half
        return depth + dip * np.where(np.abs(s) < 1.0, 1.0 - s * s, 0.0)

    return profile


@dataclass(frozen=True, eq=False)
class VelocityModel:
    """Three piecewise-constant layers separated by y = top(x) and y = bottom(x)."""

    velocities: tuple[float, float, float] = (1500.0, 2000.0, 2500.0)
    top: Callable[[np.ndarray], np.ndarray] = field(default_factory=lambda: concave_profile(300.0))
    bottom: Callable[[np.ndarray], np.ndarray] = field(default_factory=lambda: concave_profile(1100.0))
    domain: tuple[float, float] = (0.0, 2000.0)
    raster: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if min(self.velocities) <= 0:
            raise ValueError("velocities must be positive")
        if self.raster is None:
            xs = np.linspace(*self.domain, 401)
            if np.any(self.top(xs) > self.bottom(xs)):
                raise ValueError("interfaces cross")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Velocity at (n, 2) points; positions outside the square take the value of the nearest edge."""
        p = np.clip(np.atleast_2d(points), *self.domain)
        if self.raster is not None:
            return self.raster(p)
        x, y = p[:, 0], p[:, 1]
        v1, v2, v3 = self.velocities
        return np.where(y < self.top(x), v1, np.where(y < self.bottom(x), v2, v3))

    @classmethod
    def homogeneous(cls, v: float, domain=(0.0, 2000.0)) -> "VelocityModel":
        return cls((v, v, v), domain=domain)

    @classmethod
    def from_csv(cls, path: str | Path) -> "VelocityModel":
        """Regular raster with header x,y,v (any row order); nearest-sample lookup."""
        data = np.genfromtxt(path, delimiter=",", names=True)
        xs, ys = np.unique(data["x"]), np.unique(data["y"])
        table = np.full((xs.size, ys.size), np.nan)
        table[np.searchsorted(xs, data["x"]), np.searchsorted(ys, data["y"])] = data["v"]
        if np.isnan(table).any() or np.any(table <= 0):
            raise ValueError("velocity raster must be complete and positive")
        interp = RegularGridInterpolator((xs, ys), table, method="nearest")
        lo, hi = max(xs[0], ys[0]), min(xs[-1], ys[-1])
        return cls(tuple(float(v) for v in np.quantile(table, [0, 0.5, 1])), domain=(lo, hi), raster=interp)


# PML coefficients --------------------------------------------------------------

@dataclass(frozen=True)
class PmlConfig:
    thickness: float = 200.0
    a0: float = 1.79
    f0: float = 25.0
    frequency: float = 25.0

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError("PML thickness must be positive")
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency


def sigma_profile(pos, cfg: PmlConfig, domain: tuple[float, float] = (0.0, 2000.0)) -> np.ndarray:
    """Quadratic damping by distance into the collar along one axis; 0 inside the physical domain."""
    pos = np.asarray(pos, dtype=np.float64)
    l = np.maximum(np.maximum(domain[0] - pos, pos - domain[1]), 0.0)
    return 2.0 * math.pi * cfg.a0 * cfg.f0 * (l / cfg.thickness) ** 2


def stretching_coeffs(sigma_x, sigma_y, omega: float):
    if omega == 0:
        raise ValueError("angular frequency must be non-zero")
    ex = 1.0 + 1j * np.asarray(sigma_x) / omega
    ey = 1.0 + 1j * np.asarray(sigma_y) / omega
    return ey / ex, ex / ey, ex * ey


def ricker_spectrum(f, f0: float):
    """Fourier transform of the Ricker wavelet (1 - 2 pi^2 f0^2 t^2) exp(-pi^2 f0^2 t^2).

    The transform is real and even: 2 f^2 / (sqrt(pi) f0^3) exp(-f^2 / f0^2).
    """
    if not f0 > 0:
        raise ValueError("dominant frequency must be positive")
    f = np.asarray(f, dtype=np.float64)
    return 2.0 * f * f / (math.sqrt(math.pi) * f0**3) * np.exp(-(f / f0) ** 2)


# assembly -----------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    position: tuple[float, float] = (1000.0, 800.0)
    amplitude: complex | None = None  # None: Ricker spectrum at the simulation frequency


def padded_grid(h: float = 10.0, collar: int = 20, domain: tuple[float, float] = (0.0, 2000.0)) -> tuple[Grid, PmlConfig]:
    """Lattice over the domain plus ``collar`` nodes per side; the matching PML thickness is collar * h."""
    lo, hi = domain
    n_phys = round((hi - lo) / h)
    if not math.isclose(n_phys * h, hi - lo):
        raise ValueError("h must divide the domain length")
    spec = GridSpec(lo - collar * h, hi + collar * h, n_phys + 2 * collar - 1, 2)
    return build_grid(spec), PmlConfig(thickness=collar * h)


def _half_node_operator(coef: np.ndarray, axis: int, h: float) -> sp.csr_matrix:
    """d/dx_axis (coef d/dx_axis) on interior nodes, conservative, Dirichlet zero outside.

    ``coef`` is given on the closure lattice.
    """
    shape = tuple(s - 2 for s in coef.shape)
    n = int(np.prod(shape))
    inner = (slice(1, -1),) * 2

    def face(offset):
        sl = list(inner)
        sl[axis] = slice(1 + offset, coef.shape[axis] - 1 + offset)
        return coef[tuple(sl)]

    c0 = coef[inner]
    plus = 0.5 * (c0 + face(1))
    minus = 0.5 * (c0 + face(-1))
    idx = np.arange(n).reshape(shape)
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [-(plus + minus).ravel() / h**2]
    for off, w in ((1, plus), (-1, minus)):
        src = [slice(None)] * 2
        dst = [slice(None)] * 2
        if off == 1:
            src[axis], dst[axis] = slice(0, -1), slice(1, None)
        else:
            src[axis], dst[axis] = slice(1, None), slice(0, -1)
        rows.append(idx[tuple(src)].ravel())
        cols.append(idx[tuple(dst)].ravel())
        vals.append(w[tuple(src)].ravel() / h**2)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def nearest_node(grid: Grid, point) -> int:
    p = np.asarray(point, dtype=np.float64)
    j = np.rint((p - grid.spec.a) / grid.h).astype(int)
    if np.any(j < 1) or np.any(j > grid.m):
        raise ValueError(f"source {tuple(p)} is not inside the computational lattice")
    return int(np.ravel_multi_index(tuple(j - 1), grid.interior_shape))


def assemble_pml_system(vel: VelocityModel, cfg: PmlConfig, grid: Grid, src: SourceSpec | None,
                        pml: bool = True) -> tuple[sp.csr_matrix, np.ndarray]:
    """Complex interior matrix and right-hand side for d_x(A d_x u) + d_y(B d_y u) + C kappa^2 u = -delta R_hat."""
    if grid.d != 2:
        raise ValueError("PML assembly is two-dimensional")
    pts = grid.closure_points
    if pml:
        sx = sigma_profile(pts[:, 0], cfg, vel.domain)
        sy = sigma_profile(pts[:, 1], cfg, vel.domain)
    else:
        sx = sy = np.zeros(pts.shape[0])
    A, B, C = (c.reshape(grid.closure_shape) for c in stretching_coeffs(sx, sy, cfg.omega))
    kappa_sq = (cfg.omega / vel(grid.interior_points)) ** 2
    matrix = (_half_node_operator(A, 0, grid.h) + _half_node_operator(B, 1, grid.h)
              + sp.diags(C[(slice(1, -1),) * 2].ravel() * kappa_sq)).tocsr()
    rhs = np.zeros(grid.n_interior, dtype=np.complex128)
    if src is not None:
        amp = ricker_spectrum(cfg.frequency, cfg.f0) if src.amplitude is None else src.amplitude
        rhs[nearest_node(grid, src.position)] = -amp / grid.h**2
    return matrix, rhs


def pml_system(vel: VelocityModel, cfg: PmlConfig, grid: Grid, src: SourceSpec | None) -> DiscreteSystem:
    """Training system on normalized inputs: network coordinates are (x - a) / (b - a) in [0, 1]^2."""
    matrix, rhs = assemble_pml_system(vel, cfg, grid, src)
    unit = build_grid(GridSpec(0.0, 1.0, grid.m, 2))
    return DiscreteSystem(unit, matrix, rhs, channels=2, source=rhs)


def pml_mgdl_train(vel: VelocityModel, cfg: PmlConfig, grid: Grid, src: SourceSpec | None,
                   adaptive: AdaptiveConfig, seed=0, snapshots: bool = True) -> tuple[MgdlModel, RunReport]:
    system = pml_system(vel, cfg, grid, src)
    report = RunReport(method="pml-mgdl")
    zero_seminorm = float(np.sqrt(np.mean(np.abs(system.rhs) ** 2)))
    model, report = run_adaptive(system, adaptive, seed, report)
    u = cumulative_eval(model, None, system.grid.interior_points)
    report.metrics["zero_model_seminorm"] = zero_seminorm
    report.metrics["residual_seminorm"] = float(np.sqrt(system.loss(u)))
    if snapshots:
        report.metrics["grade_snapshots"] = [
            float(np.sqrt(system.loss(cumulative_eval(MgdlModel(model.input_dim, 2, model.grades[:l]), None,
                                                       system.grid.interior_points))))
            for l in range(1, len(model.grades) + 1)]
    return model, report


def wavefield(model: MgdlModel, grid: Grid) -> np.ndarray:
    """Complex model values at the interior nodes of the physical-coordinate ``grid``."""
    x = (grid.interior_points - grid.spec.a) / (grid.spec.b - grid.spec.a)
    out = cumulative_eval(model, None, x)
    return out[:, 0] + 1j * out[:, 1]
