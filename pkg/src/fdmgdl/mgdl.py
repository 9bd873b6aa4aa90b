"""Multi-grade training on the finite-difference residual.

Grade l is a shallow network fed by the frozen hidden features of grade l-1
and fitted to the residual left by grades 1..l-1.  After Adam, the output
layer is re-solved by least squares (keeping the best of that, the trained
layer and zero), so recorded grade losses never increase.

Residual vectors are stored per grade and reused as the next target; a zero
correction therefore reproduces the previous loss bit for bit.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .helmholtz import DiscreteSystem, loss_and_gradient, polish_output_layer, to_complex
from .net import Activation, FeatureMap, Mlp, feature, freeze_features, xavier_init
from .optim import LrSchedule, StoppingRule, TrainingDiverged, train
from .report import CurveRow, RunReport


@dataclass(frozen=True, eq=False)
class GradeRecord:
    features: FeatureMap
    out_weight: np.ndarray
    out_bias: np.ndarray
    depth: int
    epochs: int
    loss: float
    wall_time: float
    polish: str = "none"

    def summary(self) -> dict:
        return {"depth": self.depth, "epochs": self.epochs, "loss": self.loss,
                "wall_time": self.wall_time, "polish": self.polish, "width": self.features.width}


@dataclass(eq=False)
class MgdlModel:
    input_dim: int
    channels: int = 1
    grades: list[GradeRecord] = field(default_factory=list)

    @property
    def equivalent_depth(self) -> int:
        """Depth of the single network obtained by stacking all grades (sum D_l - L + 1)."""
        if not self.grades:
            return 0
        return sum(g.depth for g in self.grades) - len(self.grades) + 1

    def feature_width(self) -> int:
        return self.grades[-1].features.width if self.grades else self.input_dim

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return cumulative_eval(self, None, x)


@dataclass(frozen=True)
class GradePlan:
    hidden: int
    width: int
    activation: Activation
    schedule: LrSchedule


@dataclass
class AdaptiveConfig:
    """Schedules repeat their last entry past the end of the list.

    ``structure`` (hidden-layer count per grade) switches the adaptive stop off
    and trains exactly ``len(structure)`` grades.
    """

    schedules: list[LrSchedule]
    grade_tol: float = 1e-6
    max_grades: int = 10
    width: int = 256
    structure: list[int] | None = None
    first_layer_scale: float = 1.0
    loss_delta_tol: float = 0.0
    polish: bool = True
    phase_bias: bool = False

    def __post_init__(self):
        if not self.schedules:
            raise ValueError("at least one schedule is required")
        if not self.grade_tol > 0:
            raise ValueError("grade tolerance must be positive")
        if self.max_grades < 1:
            raise ValueError("max_grades must be at least 1")
        if self.width < 1:
            raise ValueError("width must be positive")
        if self.structure is not None and (not self.structure or min(self.structure) < 1):
            raise ValueError("structure needs a positive hidden-layer count per grade")

    def plan(self, l: int) -> GradePlan:
        """Plan for grade l (1-based)."""
        sched = self.schedules[min(l, len(self.schedules)) - 1]
        if self.structure is not None:
            hidden = self.structure[l - 1]
        else:
            hidden = 2 if l == 1 else 1
        act = Activation.SINE if l == 1 else Activation.RELU
        return GradePlan(hidden, self.width, act, sched)

    @property
    def n_grades_cap(self) -> int:
        return len(self.structure) if self.structure is not None else self.max_grades


def new_grade(model: MgdlModel, width: int, activation: Activation | str | None = None, hidden: int | None = None,
              seed=0, first_layer_scale: float = 1.0, phase_bias: bool = False) -> Mlp:
    """Fresh trainable network for the next grade."""
    if width < 1:
        raise ValueError("width must be positive")
    first = not model.grades
    hidden = (2 if first else 1) if hidden is None else hidden
    activation = Activation(activation) if activation is not None else (Activation.SINE if first else Activation.RELU)
    shapes = [model.feature_width()] + [width] * hidden + [model.channels]
    return xavier_init(shapes, seed, [activation] * hidden, first_layer_scale if first else 1.0, phase_bias and first)


def _feature_chain(model: MgdlModel, x: np.ndarray):
    h = np.asarray(x, dtype=np.float64)
    total = np.zeros((h.shape[0], model.channels))
    for rec in model.grades:
        h = rec.features(h)
        total = total + (h @ rec.out_weight.T + rec.out_bias)
    return h, total


def cumulative_eval(model: MgdlModel, trainable: Mlp | None, x: np.ndarray) -> np.ndarray:
    """Sum of frozen grade outputs, plus the trainable grade when given; (n, channels)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input dimension {x.shape[1]} != {model.input_dim}")
    h, total = _feature_chain(model, x)
    if trainable is not None:
        if trainable.input_dim != h.shape[1]:
            raise ValueError(f"trainable grade expects {trainable.input_dim} inputs, features have {h.shape[1]}")
        total = total + trainable(h)
    return total


def grade_residual(model: MgdlModel, system: DiscreteSystem) -> np.ndarray:
    """Residual of the frozen cumulative model on the interior lattice."""
    u = cumulative_eval(model, None, system.grid.interior_points)
    return system.residual(u)


@dataclass
class GradeOutcome:
    mlp: Mlp
    residual: np.ndarray
    loss: float
    curve: list[tuple[int, float, float, float]]
    wall_time: float
    polish: str


def fit_grade(mlp: Mlp, inputs: np.ndarray, target: np.ndarray, system: DiscreteSystem, schedule: LrSchedule,
              stop: StoppingRule | None = None, polish: bool = True) -> GradeOutcome:
    """Train ``mlp`` (in place) so that A mlp(inputs) fits ``target``, then polish its output layer."""
    sub = dataclasses.replace(system, rhs=target)
    start = time.perf_counter()
    result = train(mlp.params(), lambda _p: loss_and_gradient(mlp, sub, inputs), schedule, stop)
    source = "adam"
    hidden = feature(mlp, inputs)
    if polish:
        pr = polish_output_layer(hidden, target, sub, current=(mlp.weights[-1], mlp.biases[-1]))
        mlp.weights[-1][...] = pr.weight
        mlp.biases[-1][...] = pr.bias
        source = pr.source
    out = hidden @ mlp.weights[-1].T + mlp.biases[-1]
    r = target - system.matrix @ to_complex(out)
    value = float(np.mean(np.abs(r) ** 2))
    wall = time.perf_counter() - start
    curve = list(zip(range(result.epochs), result.losses, result.lrs, result.elapsed))
    return GradeOutcome(mlp, r, value, curve, wall, source)


def _freeze(mlp: Mlp, outcome: GradeOutcome, epochs: int) -> GradeRecord:
    w, b = mlp.weights[-1].copy(), mlp.biases[-1].copy()
    w.setflags(write=False)
    b.setflags(write=False)
    return GradeRecord(freeze_features(mlp), w, b, mlp.depth, epochs, outcome.loss, outcome.wall_time, outcome.polish)


def run_adaptive(system: DiscreteSystem, cfg: AdaptiveConfig, seed=0,
                 report: RunReport | None = None) -> tuple[MgdlModel, RunReport]:
    """Grade loop: stop once successive grade losses differ by at most ``cfg.grade_tol``.

    With ``cfg.structure`` set, exactly that many grades are trained.  A
    diverging grade ends the run with status "diverged" and the grades
    completed so far.
    """
    rng = np.random.default_rng(seed)
    report = report or RunReport(method="mgdl")
    model = MgdlModel(system.grid.d, system.channels)
    inputs = system.grid.interior_points
    target = np.array(system.rhs, copy=True)
    report.metrics["initial_loss"] = float(np.mean(np.abs(target) ** 2))
    prev = math.inf
    for l in range(1, cfg.n_grades_cap + 1):
        plan = cfg.plan(l)
        mlp = new_grade(model, plan.width, plan.activation, plan.hidden, rng, cfg.first_layer_scale, cfg.phase_bias)
        stop = StoppingRule(plan.schedule.epochs, cfg.loss_delta_tol)
        try:
            outcome = fit_grade(mlp, inputs, target, system, plan.schedule, stop, cfg.polish)
        except TrainingDiverged as exc:
            report.status = "diverged"
            report.error = f"grade {l}, epoch {exc.epoch}: {exc}"
            break
        rec = _freeze(mlp, outcome, len(outcome.curve))
        model.grades.append(rec)
        report.grades.append({"grade": l, **rec.summary()})
        report.curves += [CurveRow(l, k, loss, lr, t) for k, loss, lr, t in outcome.curve]
        inputs = feature(mlp, inputs)
        target = outcome.residual
        delta = abs(outcome.loss - prev)
        prev = outcome.loss
        if cfg.structure is None and not delta > cfg.grade_tol:
            break
    report.metrics["grade_losses"] = [g["loss"] for g in report.grades]
    report.metrics["equivalent_depth"] = model.equivalent_depth
    return model, report


# single-grade baseline --------------------------------------------------------

def sgdl_activations(hidden: int, n_sine: int = 2) -> list[Activation]:
    """sin on the first ``n_sine`` hidden layers, ReLU after."""
    return [Activation.SINE if i < n_sine else Activation.RELU for i in range(hidden)]


def train_sgdl(system: DiscreteSystem, hidden: int, width: int, schedule: LrSchedule, seed=0,
               n_sine: int = 2, first_layer_scale: float = 1.0, loss_delta_tol: float = 0.0,
               report: RunReport | None = None, phase_bias: bool = False) -> tuple[Mlp, RunReport]:
    """One deep network trained end-to-end on the same residual loss."""
    report = report or RunReport(method="sgdl")
    shapes = [system.grid.d] + [width] * hidden + [system.channels]
    mlp = xavier_init(shapes, np.random.default_rng(seed), sgdl_activations(hidden, n_sine), first_layer_scale,
                      phase_bias)
    start = time.perf_counter()
    try:
        result = train(mlp.params(), lambda _p: loss_and_gradient(mlp, system), schedule,
                       StoppingRule(schedule.epochs, loss_delta_tol))
    except TrainingDiverged as exc:
        report.status = "diverged"
        report.error = f"epoch {exc.epoch}: {exc}"
        return mlp, report
    final = system.loss(mlp(system.grid.interior_points))
    report.grades.append({"grade": 1, "depth": mlp.depth, "epochs": result.epochs, "loss": final,
                          "wall_time": time.perf_counter() - start, "polish": "none", "width": width})
    report.curves += [CurveRow(1, k, loss, lr, t) for k, (loss, lr, t)
                      in enumerate(zip(result.losses, result.lrs, result.elapsed))]
    return mlp, report


def schedules_from(t_max: Sequence[float], t_min: Sequence[float], epochs: Sequence[int]) -> list[LrSchedule]:
    if not len(t_max) == len(t_min) == len(epochs):
        raise ValueError("schedule lists differ in length")
    return [LrSchedule(float(a), float(b), int(k)) for a, b, k in zip(t_max, t_min, epochs)]
