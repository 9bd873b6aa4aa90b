"""Adam with exponential learning-rate decay and a loss-plateau stop."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class LrSchedule:
    t_max: float
    t_min: float
    epochs: int

    def __post_init__(self):
        if not (self.t_max > 0 and self.t_min > 0):
            raise ValueError("learning rates must be positive")
        if self.t_min > self.t_max:
            raise ValueError(f"t_min {self.t_min} exceeds t_max {self.t_max}")
        if self.epochs < 0:
            raise ValueError("epoch budget must be non-negative")

    @property
    def gamma(self) -> float:
        if self.epochs == 0:
            return 0.0
        return math.log(self.t_max / self.t_min) / self.epochs


def lr_at(schedule: LrSchedule, k: int) -> float:
    if k < 0 or k > schedule.epochs:
        raise ValueError(f"epoch {k} outside 0..{schedule.epochs}")
    if k == schedule.epochs:
        return schedule.t_min
    return schedule.t_max * math.exp(-schedule.gamma * k)


@dataclass
class AdamState:
    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ValueError("params, grads and optimizer state disagree in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("non-finite gradient", state.step)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.first, state.second):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


@dataclass(frozen=True)
class StoppingRule:
    max_epochs: int
    loss_delta_tol: float = 0.0


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.losses)


def train(params: Sequence[np.ndarray], loss_and_grad: Callable[[Sequence[np.ndarray]], tuple[float, list]],
          schedule: LrSchedule, stop: StoppingRule | None = None, state: AdamState | None = None) -> TrainResult:
    """Full-batch Adam loop; ``params`` are updated in place.

    Epoch k records the loss at the parameters entering that epoch.  The run ends
    after ``stop.max_epochs`` epochs or once consecutive losses differ by less
    than ``stop.loss_delta_tol`` (no update is applied on that final epoch).
    """
    stop = stop or StoppingRule(schedule.epochs)
    budget = min(stop.max_epochs, schedule.epochs)
    state = state or AdamState.like(params)
    result = TrainResult()
    start = time.perf_counter()
    prev = None
    for k in range(budget):
        loss, grads = loss_and_grad(params)
        if not math.isfinite(loss):
            result.wall_time = time.perf_counter() - start
            raise TrainingDiverged(f"loss became {loss} at epoch {k}", k)
        lr = lr_at(schedule, k)
        result.losses.append(float(loss))
        result.lrs.append(lr)
        result.elapsed.append(time.perf_counter() - start)
        if prev is not None and abs(loss - prev) < stop.loss_delta_tol:
            break
        prev = loss
        try:
            adam_step(state, params, grads, lr)
        except TrainingDiverged as exc:
            raise TrainingDiverged(str(exc), k) from None
    result.wall_time = time.perf_counter() - start
    return result
