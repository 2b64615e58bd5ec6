"""Gradient-descent training loop, step rules and the sliding-window batch composer.

``train`` is model-agnostic: anything that exposes ``param_count`` and
``value_and_gradient(params, indices, ds)`` can be trained.  Batch losses
and gradients are means over the points in the (effective) batch.
"""
from __future__ import annotations

import csv
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .data import Dataset, shuffle_indices
from .trace import ObjectClass, Trace, record

RULES = ("sgd", "momentum", "adam", "adagrad")
SCHEDULES = ("constant", "inverse_time")


class DivergenceError(FloatingPointError):
    """Raised when a loss, gradient or parameter stops being finite."""


class GradientProvider(Protocol):
    param_count: int

    def value_and_gradient(self, params: np.ndarray, indices: np.ndarray,
                           ds: Dataset) -> tuple[float, np.ndarray]:
        ...


@dataclass
class OptimizerState:
    rule: str = "sgd"
    lr: float = 0.01
    schedule: str = "constant"
    decay_rate: float = 0.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    velocity: np.ndarray | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    accumulator: np.ndarray | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.lr < 0 or self.decay_rate < 0:
            raise ValueError("lr and decay_rate must be nonnegative")

    def fresh(self) -> "OptimizerState":
        """Same hyperparameters, empty buffers, step counter reset."""
        return OptimizerState(self.rule, self.lr, self.schedule, self.decay_rate,
                              self.momentum, self.beta1, self.beta2, self.eps)

    def current_lr(self) -> float:
        """Step size for the next update (counter ``t`` = updates already applied)."""
        if self.schedule == "inverse_time":
            return self.lr / (1.0 + self.decay_rate * self.t)
        return self.lr


def apply_step(opt: OptimizerState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Return updated parameters; advances the optimizer's buffers and counter."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError(f"params {params.shape} and gradient {grad.shape} differ in shape")
    if not (np.all(np.isfinite(params)) and np.all(np.isfinite(grad))):
        raise DivergenceError(f"non-finite input to {opt.rule} step {opt.t}")
    lr = opt.current_lr()
    if opt.rule == "sgd":
        out = params - lr * grad
    elif opt.rule == "momentum":
        if opt.velocity is None:
            opt.velocity = np.zeros_like(params)
        opt.velocity = opt.momentum * opt.velocity + grad
        out = params - lr * opt.velocity
    elif opt.rule == "adagrad":
        if opt.accumulator is None:
            opt.accumulator = np.zeros_like(params)
        opt.accumulator = opt.accumulator + grad * grad
        out = params - lr * grad / np.sqrt(opt.accumulator + opt.eps)
    else:
        if opt.m is None:
            opt.m = np.zeros_like(params)
            opt.v = np.zeros_like(params)
        step = opt.t + 1
        opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
        opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad * grad
        m_hat = opt.m / (1.0 - opt.beta1 ** step)
        v_hat = opt.v / (1.0 - opt.beta2 ** step)
        out = params - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    opt.t += 1
    return out


class SlidingWindow:
    """FIFO of recently visited training-point indices.

    ``multiplier`` m controls how many previous batches are appended to a
    new batch; capacity defaults to m * batch_size once the first batch is
    seen.
    """

    def __init__(self, multiplier: int, capacity: int | None = None):
        if multiplier < 0:
            raise ValueError("window multiplier must be >= 0")
        self.multiplier = multiplier
        self.capacity = capacity
        self.entries: deque[int] = deque()

    def __len__(self):
        return len(self.entries)

    def push(self, indices) -> None:
        self.entries.extend(int(i) for i in indices)
        while self.capacity is not None and len(self.entries) > self.capacity:
            self.entries.popleft()

    def newest(self, count: int) -> list[int]:
        if count <= 0:
            return []
        count = min(count, len(self.entries))
        return list(self.entries)[len(self.entries) - count:]


def compose_window_batch(new_batch, window: SlidingWindow) -> np.ndarray:
    """New points followed by up to m*B most recently visited points.

    The window stores indices only; gradients for the cached points are
    recomputed against the current model by whoever consumes the batch.
    """
    new_batch = np.asarray(new_batch, dtype=np.int64)
    b = len(new_batch)
    if window.capacity is None:
        window.capacity = window.multiplier * b
    cached = window.newest(window.multiplier * b)
    window.push(new_batch)
    if not cached:
        return new_batch
    return np.concatenate([new_batch, np.asarray(cached, dtype=np.int64)])


@dataclass
class TrainRecord:
    epoch: int
    batch_index: int
    points_touched: int
    loss: float
    wall_ns: int


@dataclass
class TrainReport:
    records: list[TrainRecord] = field(default_factory=list)
    params: np.ndarray | None = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "points_touched", "batch_index", "loss", "wall_ns"])
            for r in self.records:
                w.writerow([r.epoch, r.points_touched, r.batch_index, repr(r.loss), r.wall_ns])


def batches(n_points: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True):
    order = shuffle_indices(n_points, seed, epoch) if shuffle else np.arange(n_points)
    for start in range(0, n_points, batch_size):
        yield order[start:start + batch_size]


def train(provider: GradientProvider, ds: Dataset, init, batch_size: int, epochs: int,
          opt: OptimizerState, window: SlidingWindow | None = None, seed: int = 0, *,
          shuffle: bool = True, trace: Trace | None = None,
          callback: Callable[[TrainRecord, np.ndarray], None] | None = None) -> TrainReport:
    """Mini-batch gradient descent over ``ds``.

    batch_size=1 is SGD, batch_size=len(ds) is full-batch GD.  One model
    update per batch, ``epochs * ceil(len(ds)/batch_size)`` in total.  With a
    window, each batch is extended by recently visited points; only new
    points count towards ``points_touched``.
    """
    n = ds.n_points
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch size {batch_size} outside [1, {n}]")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    params = np.array(init, dtype=np.float64, copy=True)
    if params.shape != (provider.param_count,):
        raise ValueError(f"init has shape {params.shape}, provider expects ({provider.param_count},)")
    report = TrainReport()
    touched = 0
    grads_seen = 0
    for epoch in range(epochs):
        for b_idx, new in enumerate(batches(n, batch_size, seed, epoch, shuffle)):
            t0 = time.perf_counter_ns()
            batch = compose_window_batch(new, window) if window is not None else new
            touched += len(new)
            if trace is not None:
                _trace_update(trace, batch, grads_seen)
                grads_seen += len(batch)
            loss, grad = provider.value_and_gradient(params, batch, ds)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(f"non-finite loss/gradient at epoch {epoch}, batch {b_idx} "
                                      f"(loss={loss}, lr={opt.current_lr()}, rule={opt.rule})")
            params = apply_step(opt, params, grad)
            rec = TrainRecord(epoch, b_idx, touched, float(loss), time.perf_counter_ns() - t0)
            report.records.append(rec)
            if callback is not None:
                callback(rec, params)
    report.params = params
    return report


def _trace_update(trace: Trace, batch, first_gradient_id: int) -> None:
    # one model read per update; each per-point gradient is added to the
    # combined gradient in the same iteration it is computed
    record(trace, ObjectClass.MODEL, 0)
    for pos, i in enumerate(batch):
        record(trace, ObjectClass.TRAINING_POINT, int(i))
        gid = first_gradient_id + pos
        record(trace, ObjectClass.GRADIENT, gid)
        record(trace, ObjectClass.GRADIENT, gid, advance=False)
