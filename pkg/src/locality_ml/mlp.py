"""Fully connected classifier with softmax cross-entropy.

Parameters live in one flat vector so the network plugs into
``optim.train``: for each layer, the (fan_in, fan_out) weight matrix in
row-major order followed by its fan_out biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import modelio
from .data import Dataset, make_rng
from .optim import DivergenceError

ACTIVATIONS = ("sigmoid", "relu")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    params: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.layer_sizes),):
            raise ValueError(f"expected {param_count(self.layer_sizes)} parameters, got {self.params.shape}")

    @classmethod
    def init(cls, layer_sizes, seed: int = 0, activation: str = "sigmoid") -> "MlpModel":
        """Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)), zero biases."""
        rng = make_rng(seed)
        chunks = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            r = np.sqrt(6.0 / (fan_in + fan_out))
            chunks.append(rng.uniform(-r, r, size=fan_in * fan_out))
            chunks.append(np.zeros(fan_out))
        return cls(tuple(layer_sizes), np.concatenate(chunks), activation)

    @classmethod
    def zeros(cls, layer_sizes, activation: str = "sigmoid") -> "MlpModel":
        return cls(tuple(layer_sizes), np.zeros(param_count(layer_sizes)), activation)

    @property
    def class_count(self) -> int:
        return self.layer_sizes[-1]

    def layers(self, params: np.ndarray | None = None):
        return unpack(self.layer_sizes, self.params if params is None else params)

    def save(self, path) -> None:
        modelio.save(path, {"kind": "mlp", "layer_sizes": list(self.layer_sizes),
                            "activation": self.activation, "params": self.params})

    @classmethod
    def load(cls, path) -> "MlpModel":
        blob = modelio.load(path, kinds=("mlp",))
        return cls(tuple(blob["layer_sizes"]), np.asarray(blob["params"]), blob["activation"])


def param_count(layer_sizes) -> int:
    return sum((a + 1) * b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def unpack(layer_sizes, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) into the flat parameter vector, one pair per layer."""
    out = []
    pos = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        W = params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = params[pos:pos + fan_out]
        pos += fan_out
        out.append((W, b))
    return out


def _activate(kind, z):
    return _sigmoid(z) if kind == "sigmoid" else np.maximum(z, 0.0)


def _activate_grad(kind, a, z):
    return a * (1.0 - a) if kind == "sigmoid" else (z > 0).astype(np.float64)


def _logits(layers, activation, X, keep=False):
    acts, pre = [X], []
    a = X
    for k, (W, b) in enumerate(layers):
        z = a @ W + b
        if k == len(layers) - 1:
            return (z, acts, pre) if keep else z
        pre.append(z)
        a = _activate(activation, z)
        acts.append(a)


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_proba(model: MlpModel, X: np.ndarray, params: np.ndarray | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"input has {X.shape[1]} features, network expects {model.layer_sizes[0]}")
    z = _logits(model.layers(params), model.activation, X)
    return np.exp(_log_softmax(z))


def forward(model: MlpModel, point) -> np.ndarray:
    """Class probabilities for a single input vector."""
    point = np.asarray(point, dtype=np.float64)
    if point.ndim != 1:
        raise ValueError("forward takes one point; use predict_proba for batches")
    return predict_proba(model, point[None, :])[0]


def value_and_gradient(model: MlpModel, batch, ds: Dataset,
                       params: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch`` and its backpropagated gradient.

    Batch indices are sorted first, so the result does not depend on the
    order in which they were given.
    """
    params = model.params if params is None else params
    idx = np.sort(np.asarray(batch, dtype=np.int64))
    X = ds.features[idx]
    y = ds.labels[idx]
    if X.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"dataset has {X.shape[1]} features, network expects {model.layer_sizes[0]}")
    if y.size and y.max() >= model.class_count:
        raise ValueError("label outside the network's output range")
    layers = model.layers(params)
    z, acts, pre = _logits(layers, model.activation, X, keep=True)
    logp = _log_softmax(z)
    n = len(idx)
    loss = -logp[np.arange(n), y].sum() / n
    if not np.isfinite(loss):
        raise DivergenceError("non-finite cross-entropy")
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        grads.append(delta.sum(axis=0))
        grads.append((acts[k].T @ delta).ravel())
        if k:
            delta = (delta @ W.T) * _activate_grad(model.activation, acts[k], pre[k - 1])
    grad = np.concatenate(grads[::-1])
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient")
    return float(loss), grad


def mean_loss(model: MlpModel, ds: Dataset, params: np.ndarray | None = None) -> float:
    z = _logits(model.layers(params if params is not None else model.params), model.activation, ds.features)
    logp = _log_softmax(z)
    return float(-logp[np.arange(ds.n_points), ds.labels].mean())


def accuracy(model: MlpModel, ds: Dataset, params: np.ndarray | None = None) -> float:
    proba = predict_proba(model, ds.features, params)
    return float((proba.argmax(axis=1) == ds.labels).mean())


class MlpProvider:
    """Adapter exposing an ``MlpModel`` architecture to ``optim.train``."""

    def __init__(self, model: MlpModel):
        self.model = model
        self.param_count = len(model.params)

    def value_and_gradient(self, params, indices, ds):
        return value_and_gradient(self.model, indices, ds, params)
