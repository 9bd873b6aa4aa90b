"""Dense shallow networks with sine / ReLU hidden layers and hand-written backprop.

Layer j maps R^{d_{j-1}} -> R^{d_j} with ``W_j`` of shape (d_j, d_{j-1}).  All
evaluation is batched: inputs are (n, d_0) arrays and outputs (n, d_D).  The
last layer is always affine.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np


class Activation(str, Enum):
    SINE = "sine"
    RELU = "relu"
    IDENTITY = "identity"


def _act(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.SINE:
        return np.sin(z)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def _act_grad(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.SINE:
        return np.cos(z)
    if kind is Activation.RELU:
        # subgradient 0 at z == 0
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


@dataclass
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[Activation, ...]

    def __post_init__(self):
        if not self.weights:
            raise ValueError("network needs at least one layer")
        if len(self.biases) != len(self.weights):
            raise ValueError("one bias per layer")
        self.activations = tuple(Activation(a) for a in self.activations)
        if len(self.activations) != len(self.weights) - 1:
            raise ValueError(
                f"{len(self.weights)} layers need {len(self.weights) - 1} hidden activations, "
                f"got {len(self.activations)}"
            )
        if Activation.IDENTITY in self.activations:
            raise ValueError("identity activation is only allowed on the output layer")
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {j + 1}: W {w.shape} and b {b.shape} inconsistent")
            if j and w.shape[1] != self.weights[j - 1].shape[0]:
                raise ValueError(f"layer {j + 1} input {w.shape[1]} != previous width {self.weights[j - 1].shape[0]}")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def shapes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def params(self) -> list[np.ndarray]:
        """Parameters in layer order [W1, b1, W2, b2, ...] (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activations)

    def checksum(self) -> str:
        hasher = hashlib.sha256()
        for p in self.params():
            hasher.update(np.ascontiguousarray(p).tobytes())
        return hasher.hexdigest()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Read-only hidden-layer prefix of a trained network."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activations: tuple[Activation, ...]

    @property
    def width(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            h = _act(kind, h @ w.T + b)
        return h


def xavier_init(shapes: Sequence[int], seed, activations: Sequence[Activation | str] | None = None,
                first_layer_scale: float = 1.0, phase_bias: bool = False) -> Mlp:
    """Uniform Xavier weights, zero biases.

    ``activations`` defaults to sine on every hidden layer.  ``first_layer_scale``
    multiplies the first weight matrix after sampling.  ``phase_bias`` draws the
    first-layer biases from U(-pi, pi) instead of zero (off by default).
    """
    shapes = [int(s) for s in shapes]
    if len(shapes) < 2:
        raise ValueError("shape chain needs at least input and output sizes")
    if any(s < 1 for s in shapes):
        raise ValueError(f"non-positive layer size in {shapes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(shapes[:-1], shapes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    weights[0] *= first_layer_scale
    if phase_bias:
        biases[0] = rng.uniform(-np.pi, np.pi, size=shapes[1])
    if activations is None:
        activations = [Activation.SINE] * (len(shapes) - 2)
    return Mlp(weights, biases, tuple(activations))


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]


def forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != mlp.input_dim:
        raise ValueError(f"input dimension {x.shape[1]} != network input {mlp.input_dim}")
    cache = ForwardCache([], [], [])
    h = x
    last = mlp.depth - 1
    for j, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        cache.inputs.append(h)
        z = h @ w.T + b
        if j == last:
            h = z
        else:
            h = _act(mlp.activations[j], z)
            cache.pre.append(z)
            cache.post.append(h)
    return (h[0] if single else h), cache


def feature(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Output of the last hidden layer."""
    if mlp.depth < 2:
        raise ValueError("feature map needs depth >= 2")
    h = np.asarray(x, dtype=np.float64)
    for w, b, kind in zip(mlp.weights[:-1], mlp.biases[:-1], mlp.activations):
        h = _act(kind, h @ w.T + b)
    return h


def freeze_features(mlp: Mlp) -> FeatureMap:
    if mlp.depth < 2:
        raise ValueError("feature map needs depth >= 2")
    ws, bs = [], []
    for w, b in zip(mlp.weights[:-1], mlp.biases[:-1]):
        w, b = w.copy(), b.copy()
        w.setflags(write=False)
        b.setflags(write=False)
        ws.append(w)
        bs.append(b)
    return FeatureMap(tuple(ws), tuple(bs), mlp.activations)


def backward(mlp: Mlp, cache: ForwardCache, output_cotangent: np.ndarray) -> list[np.ndarray]:
    """Gradients of sum_k <cot_k, N(x_k)> in :meth:`Mlp.params` order."""
    g = np.asarray(output_cotangent, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    n = cache.inputs[0].shape[0]
    if g.shape != (n, mlp.output_dim):
        raise ValueError(f"cotangent shape {g.shape} != ({n}, {mlp.output_dim})")
    grads: list[np.ndarray] = [None] * (2 * mlp.depth)  # type: ignore[list-item]
    for j in range(mlp.depth - 1, -1, -1):
        if j < mlp.depth - 1:
            kind = mlp.activations[j]
            g = g * _act_grad(kind, cache.pre[j])
        grads[2 * j] = g.T @ cache.inputs[j]
        grads[2 * j + 1] = g.sum(axis=0)
        if j:
            g = g @ mlp.weights[j]
    return grads


def to_flat(mlp: Mlp) -> np.ndarray:
    return np.concatenate([p.ravel() for p in mlp.params()])


def from_flat(template: Mlp, vec: np.ndarray) -> Mlp:
    vec = np.asarray(vec, dtype=np.float64)
    out, pos = [], 0
    for p in template.params():
        out.append(vec[pos:pos + p.size].reshape(p.shape).copy())
        pos += p.size
    if pos != vec.size:
        raise ValueError(f"flat vector has {vec.size} entries, network needs {pos}")
    return Mlp(out[0::2], out[1::2], template.activations)


def dump_params(mlp: Mlp, path: str | Path) -> None:
    """Write parameters one value per line, layer-ordered, W row-major then b."""
    header = "shapes=" + ",".join(map(str, mlp.shapes)) + " activations=" + ",".join(a.value for a in mlp.activations)
    np.savetxt(path, to_flat(mlp), fmt="%.17g", header=header)


def load_params(path: str | Path) -> Mlp:
    with open(path) as fh:
        header = fh.readline().lstrip("#").strip()
    fields = dict(item.split("=", 1) for item in header.split())
    shapes = [int(s) for s in fields["shapes"].split(",")]
    acts = [Activation(a) for a in fields.get("activations", "").split(",") if a]
    template = xavier_init(shapes, 0, acts)
    return from_flat(template, np.loadtxt(path, ndmin=1))
