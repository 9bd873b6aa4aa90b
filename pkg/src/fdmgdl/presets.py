"""Benchmark problems and named hyperparameter presets.

Paper-scale presets copy the published grade schedules, grids and single-grade
baselines.  Every one of them also has a ``desk-`` twin with the wavenumber
scaled down and the grid sized at about 12 points per wavelength, so the whole
pipeline runs in minutes on a laptop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import GridSpec, build_grid
from .helmholtz import ProblemSpec
from .mgdl import AdaptiveConfig, schedules_from


# problems ---------------------------------------------------------------------

def sine_solution(kappa: float, d: int) -> Callable[[np.ndarray], np.ndarray]:
    """prod_i sin(kappa x_i / sqrt(d)); solves (Laplace + kappa^2) u = 0."""
    c = kappa / math.sqrt(d)

    def u(p):
        return np.prod(np.sin(c * np.atleast_2d(p)), axis=1)

    return u


def wave_vector(kappa: float, d: int, theta: float, phi: float = 0.0) -> np.ndarray:
    if d == 1:
        return np.array([kappa])
    if d == 2:
        return kappa * np.array([math.cos(theta), math.sin(theta)])
    return kappa * np.array([math.cos(phi) * math.cos(theta), math.cos(phi) * math.sin(theta), math.sin(phi)])


def plane_wave_solution(kappa: float, d: int, theta: float, phi: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    k = wave_vector(kappa, d, theta, phi)

    def u(p):
        return np.exp(1j * (np.atleast_2d(p) @ k))

    return u


def sine_problem(kappa: float, d: int, m: int) -> ProblemSpec:
    u = sine_solution(kappa, d)
    return ProblemSpec(GridSpec(0.0, 1.0, m, d), kappa=kappa, source=0.0, boundary=u, exact=u,
                       name=f"{d}d-sine-k{kappa:g}")


def plane_wave_problem(kappa: float, d: int, m: int, theta: float, phi: float = 0.0) -> ProblemSpec:
    u = plane_wave_solution(kappa, d, theta, phi)
    return ProblemSpec(GridSpec(0.0, 1.0, m, d), kappa=kappa, source=0.0, boundary=u, exact=u,
                       complex_valued=True, name=f"{d}d-wave-k{kappa:g}")


def exact_eval(problem: ProblemSpec, x) -> np.ndarray:
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    return problem.exact(np.atleast_2d(np.asarray(x, dtype=np.float64)))


def test_points(d: int, m_test: int) -> np.ndarray:
    """Interior nodes of the m_test lattice on (0, 1)^d."""
    return build_grid(GridSpec(0.0, 1.0, m_test, d)).interior_points


# presets ----------------------------------------------------------------------

@dataclass(frozen=True)
class SgdlPlan:
    hidden: int
    t_max: float
    t_min: float
    epochs: int
    width: int = 256
    n_sine: int = 2


@dataclass(frozen=True)
class HyperPreset:
    name: str
    problem: str  # "sin" or "wave"
    d: int
    kappa: float
    m: int
    m_test: int
    t_max: tuple[float, ...]
    t_min: tuple[float, ...]
    epochs: tuple[int, ...]
    width: int = 256
    structure: tuple[int, ...] | None = None
    sgdl: SgdlPlan | None = None
    theta: float = 0.0
    phi: float = 0.0
    grade_tol: float = 1e-10
    first_layer_scale: float = 1.0
    phase_bias: bool = False
    desk: bool = False
    notes: str = ""

    def problem_spec(self) -> ProblemSpec:
        if self.problem == "sin":
            return sine_problem(self.kappa, self.d, self.m)
        if self.problem == "wave":
            return plane_wave_problem(self.kappa, self.d, self.m, self.theta, self.phi)
        raise ValueError(f"unknown problem kind {self.problem!r}")

    def adaptive_config(self) -> AdaptiveConfig:
        """Grade count capped at the number of listed schedules."""
        return AdaptiveConfig(schedules_from(self.t_max, self.t_min, self.epochs), grade_tol=self.grade_tol,
                              max_grades=len(self.epochs), width=self.width,
                              structure=list(self.structure) if self.structure else None,
                              first_layer_scale=self.first_layer_scale, phase_bias=self.phase_bias)

    @property
    def total_epochs(self) -> int:
        return int(sum(self.epochs))

    def test_points(self) -> np.ndarray:
        return test_points(self.d, self.m_test)


_REGISTRY: dict[str, HyperPreset] = {}


def register(preset: HyperPreset) -> HyperPreset:
    if preset.name in _REGISTRY:
        raise ValueError(f"duplicate preset {preset.name!r}")
    _REGISTRY[preset.name] = preset
    return preset


def list_presets() -> list[str]:
    return sorted(_REGISTRY)


def get_preset(name: str) -> HyperPreset:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(list_presets())}") from None


def load_preset(name: str) -> tuple[ProblemSpec, AdaptiveConfig]:
    p = get_preset(name)
    return p.problem_spec(), p.adaptive_config()


_GRID_2D = {50: (300, 150), 100: (500, 250), 150: (700, 350), 200: (700, 350)}

# 2D sine: (t_max, t_min, epochs) per grade, then the single-grade baseline
_2DSIN = {
    50: ((1e-1, 1e-2, 1e-3, 1e-3, 1e-3, 1e-3), (1e-2, 1e-3, 1e-4, 1e-3, 1e-3, 1e-3), (400, 3000, 3000, 2500, 2500, 1000),
         SgdlPlan(7, 1e-3, 1e-4, 15000)),
    100: ((1e-1, 1e-1, 1e-2, 1e-2), (1e-1, 1e-2, 1e-3, 1e-3), (500, 2000, 2000, 2000), SgdlPlan(5, 1e-2, 1e-2, 8000)),
    150: ((1e-1, 1e-1, 1e-2, 1e-3, 1e-2), (1e-2, 1e-1, 1e-3, 1e-3, 1e-3), (500, 1500, 2000, 2000, 2000),
          SgdlPlan(6, 1e-2, 1e-4, 10000)),
    200: ((1e-1, 1e-1, 1e-3, 1e-2), (1e-1, 1e-2, 1e-3, 1e-3), (500, 2000, 2000, 2000), SgdlPlan(5, 1e-2, 1e-4, 8000)),
}
_2DWAVE = {
    50: ((1e-1, 1e-3, 1e-1), (1e-1, 1e-4, 1e-3), (500, 2000, 2000), SgdlPlan(4, 1e-1, 1e-4, 6000)),
    100: ((1e-1, 1e-2, 1e-3, 1e-3), (1e-2, 1e-3, 1e-4, 1e-4), (500, 2000, 2000, 2000), SgdlPlan(5, 1e-1, 1e-2, 8000)),
    150: ((1e-1, 1e-2, 1e-3), (1e-2, 1e-3, 1e-3), (500, 1000, 1000), SgdlPlan(4, 1e-1, 1e-4, 5000)),
    200: ((1e-1, 1e-1, 1e-3, 1e-2), (1e-2, 1e-2, 1e-4, 1e-2), (500, 1000, 1000, 1000), SgdlPlan(5, 1e-1, 1e-2, 5000)),
}
_3DSIN = {
    20: ((1e-1, 1e-2, 1e-3, 1e-3, 1e-3), (1e-1, 1e-3, 1e-4, 1e-3, 1e-3), (500, 2000, 2000, 2000, 2000),
         SgdlPlan(6, 1e-3, 1e-3, 10000)),
    30: ((1e-1, 1e-2, 1e-3), (1e-1, 1e-4, 1e-4), (500, 2500, 3000), SgdlPlan(4, 1e-1, 1e-2, 8000)),
    40: ((1e-1, 1e-1) + (1e-3,) * 5, (1e-1, 1e-1) + (1e-3,) * 5, (500, 2000) + (2000,) * 5,
         SgdlPlan(8, 1e-2, 1e-3, 15000)),
    50: ((1e-1, 1e-2, 1e-3, 1e-3), (1e-1, 1e-3, 1e-4, 1e-4), (500, 2000, 2000, 2000), SgdlPlan(5, 1e-2, 1e-2, 8000)),
}
_3DWAVE = {
    20: ((1e-1, 1e-1, 1e-3, 1e-3), (1e-2, 1e-1, 1e-3, 1e-3), (500, 1000, 1000, 1000), SgdlPlan(5, 1e-1, 1e-3, 5000)),
    30: ((1e-1, 1e-1, 1e-2, 1e-3), (1e-4, 1e-1, 1e-3, 1e-4), (500, 1000, 1000, 1000), SgdlPlan(5, 1e-1, 1e-2, 5000)),
}
# a table entry with t_min above t_max cannot be a decay; it is read as the constant t_min
_ANGLES = {2: (math.pi / 4, 0.0), 3: (math.pi / 8, math.pi / 3)}


def _fix(tmax, tmin):
    return tuple(max(a, b) for a, b in zip(tmax, tmin)), tuple(tmin)


def _register_paper():
    for table, kind, d in ((_2DSIN, "sin", 2), (_2DWAVE, "wave", 2), (_3DSIN, "sin", 3), (_3DWAVE, "wave", 3)):
        for kappa, (tmax, tmin, epochs, sg) in table.items():
            m, mt = _GRID_2D[kappa] if d == 2 else (60, 30)
            theta, phi = _ANGLES[d] if kind == "wave" else (0.0, 0.0)
            tmax, tmin = _fix(tmax, tmin)
            suffix = "-mgdl1" if (kind, d) == ("sin", 2) else ""
            register(HyperPreset(f"{d}d{kind}-k{kappa}{suffix}", kind, d, float(kappa), m, mt, tmax, tmin, epochs,
                                 sgdl=sg, theta=theta, phi=phi))
    base = _REGISTRY["2dsin-k50-mgdl1"]
    register(replace(base, name="2dsin-k50-mgdl2", structure=(2, 2, 3), t_max=(1e-1, 1e-2, 1e-3),
                     t_min=(1e-2, 1e-2, 1e-3), epochs=(2000, 2000, 2000), notes="fewer, deeper grades"))
    register(replace(base, name="2dsin-k50-mgdl3", structure=(3, 2, 2), t_max=(1e-1, 1e-3, 1e-3),
                     t_min=(1e-4, 1e-3, 1e-3), epochs=(2000, 2000, 2000), notes="fewer, deeper grades"))


# desk scale --------------------------------------------------------------------

DESK_WIDTH = 64
DESK_PPW = 12.0


def desk_grid(kappa: float, ppw: float = DESK_PPW) -> int:
    """Interior node count per axis giving about ``ppw`` points per wavelength on (0, 1)."""
    return max(8, math.ceil(ppw * kappa / (2.0 * math.pi)) - 1)


def desk_variant(p: HyperPreset, kappa: float, m: int | None = None, width: int = DESK_WIDTH,
                 epoch_scale: float = 0.25, name: str | None = None) -> HyperPreset:
    m = desk_grid(kappa) if m is None else m
    epochs = tuple(max(1, round(e * epoch_scale)) for e in p.epochs)
    sg = p.sgdl and replace(p.sgdl, width=width, epochs=int(sum(epochs)))
    return replace(p, name=name or f"desk-{p.name}", kappa=float(kappa), m=m, m_test=max(4, m // 2),
                   epochs=epochs, width=width, sgdl=sg, desk=True)


def _register_desk():
    for name in list(_REGISTRY):
        p = _REGISTRY[name]
        register(desk_variant(p, p.kappa / (5.0 if p.d == 2 else 2.5)))


def frequency_scale(freq: float, width: int, fan_in: int = 2) -> float:
    """First-layer multiplier turning the Xavier bound into ``freq``."""
    return freq / math.sqrt(6.0 / (fan_in + width))


def _register_acceptance():
    # κ=10 on m=40: small enough for 20-seed sweeps
    register(HyperPreset("desk-2dsin-k10-m40", "sin", 2, 10.0, 40, 20, (1e-2, 1e-3, 1e-3, 1e-3),
                         (1e-3, 1e-4, 1e-4, 1e-4), (200, 100, 100, 100), width=DESK_WIDTH,
                         sgdl=SgdlPlan(5, 1e-3, 1e-4, 500, width=DESK_WIDTH), desk=True,
                         notes="monotonicity sweeps"))
    # κ=20 on m=80: one sine layer with random phases spans the near-resonant modes at width 256
    register(HyperPreset("desk-2dsin-k20-m80", "sin", 2, 20.0, 80, 40, (1e-3,) * 3, (1e-4,) * 3, (200, 150, 150),
                         width=256, structure=(1, 1, 1), first_layer_scale=frequency_scale(15.0, 256),
                         phase_bias=True, sgdl=SgdlPlan(3, 1e-3, 1e-4, 500, width=256, n_sine=1), desk=True,
                         notes="MGDL vs SGDL at equal epoch budget"))


_register_paper()
_register_desk()
_register_acceptance()
