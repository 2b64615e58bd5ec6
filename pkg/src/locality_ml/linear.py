"""Logistic regression and linear SVM trained by mini-batch gradient descent.

The batch kernel accepts several hyperplanes at once.  Each training row is
read once per batch visit and its features are streamed past every
learner, so training LR and SVM together costs roughly one traversal of
the data instead of two.  Per learner, the floating-point operations run
in the same order whether it is trained alone or jointly (points in batch
order, features in ascending index), which makes the two paths produce
bit-identical weights.

Labels are 0/1 in a ``Dataset`` and -1/+1 inside this module.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import modelio
from .data import Dataset, shuffle_indices
from .optim import DivergenceError, OptimizerState, TrainRecord, TrainReport, apply_step
from .trace import ObjectClass, Trace, record

KINDS = ("logistic", "svm")
_KIND_CODE = {"logistic": 0, "svm": 1}


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    kind: str = "logistic"
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown linear model kind {self.kind!r}")
        self.weights = np.array(self.weights, dtype=np.float64)
        self.bias = float(self.bias)
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")

    @classmethod
    def zeros(cls, n_features: int, kind: str = "logistic", weight_decay: float = 0.0) -> "LinearModel":
        return cls(np.zeros(n_features), 0.0, kind, weight_decay)

    @property
    def params(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    def with_params(self, params: np.ndarray) -> "LinearModel":
        return replace(self, weights=params[:-1].copy(), bias=float(params[-1]))

    def save(self, path) -> None:
        modelio.save(path, {"kind": self.kind, "n_features": len(self.weights),
                            "weight_decay": self.weight_decay,
                            "weights": self.weights, "bias": self.bias})

    @classmethod
    def load(cls, path) -> "LinearModel":
        blob = modelio.load(path, kinds=KINDS)
        weights = np.asarray(blob["weights"], dtype=np.float64)
        if len(weights) != blob["n_features"]:
            raise modelio.ModelFormatError(f"{path}: weight count does not match n_features")
        return cls(weights, blob["bias"], blob["kind"], blob["weight_decay"])


# --------------------------------------------------------------------------
# scalar pieces shared by the compiled kernels and the traced reference path


@numba.njit(cache=True)
def _point_loss_coef(kind, y, p):
    """Loss and dloss/dp for one point with signed label y and score p."""
    z = y * p
    if kind == 0:
        if z >= 0.0:
            e = math.exp(-z)
            loss = math.log1p(e)
            s = e / (1.0 + e)
        else:
            e = math.exp(z)
            loss = -z + math.log1p(e)
            s = 1.0 / (1.0 + e)
        return loss, -y * s
    if z < 1.0:
        return 1.0 - z, -y
    return 0.0, 0.0


@numba.njit(cache=True)
def _batch_gradients(X, y, batch, W, bias, kinds, gW, gb, losses):
    """Mean loss and gradient of every learner over one batch.

    W is (learners, features).  Returns the number of feature-row visits.
    """
    n_learn, d = W.shape
    p = np.empty(n_learn)
    coef = np.empty(n_learn)
    gW[:, :] = 0.0
    gb[:] = 0.0
    losses[:] = 0.0
    for r in range(batch.shape[0]):
        t = batch[r]
        for ell in range(n_learn):
            p[ell] = 0.0
        for i in range(d):
            xi = X[t, i]
            for ell in range(n_learn):
                p[ell] += xi * W[ell, i]
        for ell in range(n_learn):
            loss, c = _point_loss_coef(kinds[ell], y[t], p[ell] + bias[ell])
            losses[ell] += loss
            coef[ell] = c
            gb[ell] += c
        for i in range(d):
            xi = X[t, i]
            for ell in range(n_learn):
                gW[ell, i] += coef[ell] * xi
    n = batch.shape[0]
    for ell in range(n_learn):
        losses[ell] /= n
        gb[ell] /= n
        for i in range(d):
            gW[ell, i] /= n
    return batch.shape[0]


@numba.njit(cache=True)
def _scores(X, W, bias, out):
    n_learn, d = W.shape
    p = np.empty(n_learn)
    for t in range(X.shape[0]):
        for ell in range(n_learn):
            p[ell] = 0.0
        for i in range(d):
            xi = X[t, i]
            for ell in range(n_learn):
                p[ell] += xi * W[ell, i]
        for ell in range(n_learn):
            out[t, ell] = p[ell] + bias[ell]


# --------------------------------------------------------------------------
# per-point operations


def _check_dims(model: LinearModel, point: np.ndarray):
    if point.shape != model.weights.shape:
        raise ValueError(f"point has {point.shape[0]} features, model has {model.weights.shape[0]}")


def inner_product(model: LinearModel, point) -> float:
    point = np.asarray(point, dtype=np.float64)
    _check_dims(model, point)
    p = 0.0
    for ti, mi in zip(point.tolist(), model.weights.tolist()):
        p += ti * mi
    return p + model.bias


def _pointgrad(kind: str, model: LinearModel, point, y: float):
    if y not in (-1.0, 1.0):
        raise ValueError("label must be -1 or +1")
    point = np.asarray(point, dtype=np.float64)
    loss, c = _point_loss_coef(_KIND_CODE[kind], float(y), inner_product(model, point))
    return loss, np.append(c * point, c)


def logistic_pointgrad(model: LinearModel, point, y: float) -> tuple[float, np.ndarray]:
    """log(1 + exp(-y p)) and its gradient w.r.t. [weights, bias]."""
    return _pointgrad("logistic", model, point, y)


def hinge_pointgrad(model: LinearModel, point, y: float) -> tuple[float, np.ndarray]:
    """max(0, 1 - y p) and a subgradient w.r.t. [weights, bias]; 0 at the kink."""
    return _pointgrad("svm", model, point, y)


class LinearProvider:
    """Mean loss/gradient over a batch, for use with ``optim.train``.

    Weight decay enters as the L2 term lambda/2 |w|^2 (bias exempt).
    """

    def __init__(self, kind: str, n_features: int, weight_decay: float = 0.0):
        if kind not in KINDS:
            raise ValueError(f"unknown linear model kind {kind!r}")
        self.kind = kind
        self.n_features = n_features
        self.weight_decay = weight_decay
        self.param_count = n_features + 1
        self._signed: tuple[Dataset, np.ndarray] | None = None

    def _y(self, ds: Dataset) -> np.ndarray:
        if self._signed is None or self._signed[0] is not ds:
            self._signed = (ds, ds.signed_labels())
        return self._signed[1]

    def value_and_gradient(self, params, indices, ds: Dataset):
        W = params[:-1].reshape(1, -1)
        b = params[-1:].copy()
        gW = np.empty_like(W)
        gb = np.empty(1)
        losses = np.empty(1)
        _batch_gradients(ds.features, self._y(ds), np.asarray(indices, dtype=np.int64),
                         W, b, np.array([_KIND_CODE[self.kind]]), gW, gb, losses)
        grad = np.append(gW[0], gb[0])
        loss = losses[0]
        if self.weight_decay:
            w = params[:-1]
            grad[:-1] += self.weight_decay * w
            loss += 0.5 * self.weight_decay * float(w @ w)
        return float(loss), grad


# --------------------------------------------------------------------------
# mini-batch update


def _decay_and_step(model: LinearModel, opt: OptimizerState, gw: np.ndarray, gb: float) -> LinearModel:
    shrink = 1.0 - opt.current_lr() * model.weight_decay
    params = np.append(shrink * model.weights, model.bias)
    new = apply_step(opt, params, np.append(gw, gb))
    return model.with_params(new)


def minibatch_update(model: LinearModel, batch, ds: Dataset, opt: OptimizerState,
                     trace: Trace | None = None) -> LinearModel:
    """One gradient step on ``batch``: mean gradient pass, then decay and step.

    With a trace, runs the plain-Python reference loop and records each
    training-row visit and each weight touch (the bias is not traced).
    """
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("empty batch")
    if ds.n_features != len(model.weights):
        raise ValueError("dataset and model dimensions differ")
    y = ds.signed_labels()
    if trace is None:
        gW = np.empty((1, len(model.weights)))
        gb = np.empty(1)
        losses = np.empty(1)
        _batch_gradients(ds.features, y, batch, model.weights.reshape(1, -1),
                         np.array([model.bias]), np.array([_KIND_CODE[model.kind]]), gW, gb, losses)
        return _decay_and_step(model, opt, gW[0], gb[0])
    return _reference_update(model, batch, ds.features, y, opt, trace)


def _reference_update(model, batch, X, y, opt, trace):
    d = len(model.weights)
    w = model.weights.tolist()
    kind = _KIND_CODE[model.kind]
    g = [0.0] * d
    gb = 0.0
    for t in batch.tolist():
        record(trace, ObjectClass.TRAINING_POINT, t)
        row = X[t].tolist()
        p = 0.0
        for i in range(d):
            record(trace, ObjectClass.MODEL, i)
            p += row[i] * w[i]
        _, c = _point_loss_coef(kind, float(y[t]), p + model.bias)
        gb += c
        for i in range(d):
            g[i] += c * row[i]
    n = len(batch)
    gw = np.array([gi / n for gi in g])
    new = _decay_and_step(model, opt, gw, gb / n)
    for i in range(d):
        record(trace, ObjectClass.MODEL, i)
    return new


# --------------------------------------------------------------------------
# training alone and jointly


@dataclass
class JointTrainConfig:
    learners: list[LinearModel]
    opt: OptimizerState = field(default_factory=OptimizerState)
    seed: int = 0

    def __post_init__(self):
        if not self.learners:
            raise ValueError("joint training needs at least one learner")


@dataclass
class LinearRun:
    models: list[LinearModel]
    reports: list[TrainReport]
    train_ns: int
    row_visits: int


def _run(learners: list[LinearModel], opt_template: OptimizerState, ds: Dataset,
         batch_size: int, epochs: int, seed: int) -> LinearRun:
    n = ds.n_points
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch size {batch_size} outside [1, {n}]")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    for m in learners:
        if len(m.weights) != ds.n_features:
            raise ValueError("dataset and model dimensions differ")
    n_learn = len(learners)
    X = ds.features
    y = ds.signed_labels()
    W = np.stack([m.weights for m in learners])
    b = np.array([m.bias for m in learners])
    kinds = np.array([_KIND_CODE[m.kind] for m in learners])
    decay = [m.weight_decay for m in learners]
    opts = [opt_template.fresh() for _ in learners]
    gW = np.empty_like(W)
    gb = np.empty(n_learn)
    losses = np.empty(n_learn)
    reports = [TrainReport() for _ in learners]
    visits = 0
    touched = 0
    start = time.perf_counter_ns()
    for epoch in range(epochs):
        order = shuffle_indices(n, seed, epoch)
        for b_idx, lo in enumerate(range(0, n, batch_size)):
            t0 = time.perf_counter_ns()
            batch = order[lo:lo + batch_size]
            touched += len(batch)
            visits += _batch_gradients(X, y, batch, W, b, kinds, gW, gb, losses)
            for ell in range(n_learn):
                if not math.isfinite(losses[ell]):
                    raise DivergenceError(f"learner {ell} diverged at epoch {epoch}, batch {b_idx}")
                opt = opts[ell]
                shrink = 1.0 - opt.current_lr() * decay[ell]
                params = np.append(shrink * W[ell], b[ell])
                new = apply_step(opt, params, np.append(gW[ell], gb[ell]))
                W[ell] = new[:-1]
                b[ell] = new[-1]
            wall = time.perf_counter_ns() - t0
            for ell in range(n_learn):
                reports[ell].records.append(TrainRecord(epoch, b_idx, touched, float(losses[ell]), wall))
    elapsed = time.perf_counter_ns() - start
    models = [replace(m, weights=W[ell].copy(), bias=float(b[ell])) for ell, m in enumerate(learners)]
    for rep, m in zip(reports, models):
        rep.params = m.params
    return LinearRun(models, reports, elapsed, visits)


def train_linear(model: LinearModel, ds: Dataset, batch_size: int, epochs: int,
                 opt: OptimizerState, seed: int = 0) -> tuple[LinearModel, TrainReport]:
    """Train one learner; batch order is ``shuffle_indices(n, seed, epoch)``."""
    run = _run([model], opt, ds, batch_size, epochs, seed)
    return run.models[0], run.reports[0]


def train_separately(cfg: JointTrainConfig, ds: Dataset, batch_size: int, epochs: int) -> LinearRun:
    """Each learner in its own pass over the data (the baseline for joint_train)."""
    runs = [_run([m], cfg.opt, ds, batch_size, epochs, cfg.seed) for m in cfg.learners]
    return LinearRun([r.models[0] for r in runs], [r.reports[0] for r in runs],
                     sum(r.train_ns for r in runs), sum(r.row_visits for r in runs))


def joint_train(cfg: JointTrainConfig, ds: Dataset, batch_size: int, epochs: int) -> LinearRun:
    """Batch loop outside, learner loop inside: every batch is read once for all learners."""
    return _run(cfg.learners, cfg.opt, ds, batch_size, epochs, cfg.seed)


# --------------------------------------------------------------------------
# prediction


def decision_scores(models: list[LinearModel], P: Dataset | np.ndarray) -> np.ndarray:
    """(points, learners) matrix of w.x + b, all learners in one pass over P."""
    X = P.features if isinstance(P, Dataset) else np.ascontiguousarray(P, dtype=np.float64)
    W = np.stack([m.weights for m in models])
    if X.shape[1] != W.shape[1]:
        raise ValueError(f"points have {X.shape[1]} features, models have {W.shape[1]}")
    out = np.empty((X.shape[0], len(models)))
    _scores(X, W, np.array([m.bias for m in models]), out)
    return out


def predict_linear(model: LinearModel, P: Dataset | np.ndarray) -> np.ndarray:
    """0/1 labels; a score of exactly 0 goes to the positive class."""
    return (decision_scores([model], P)[:, 0] >= 0.0).astype(np.int64)


def predict_joint(models: list[LinearModel], P: Dataset | np.ndarray) -> list[np.ndarray]:
    scores = decision_scores(models, P)
    return [(scores[:, ell] >= 0.0).astype(np.int64) for ell in range(len(models))]
