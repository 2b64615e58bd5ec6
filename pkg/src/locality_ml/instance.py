"""Brute-force k-NN and Parzen-window classifiers, fused and blocked.

Every path computes the squared Euclidean distance of a (query, reference)
pair with the same loop (features in ascending order), scans references in
ascending index order and applies the same tie rules:

* neighbour candidates are ordered by (distance, reference index);
* vote and kernel-weight ties go to the smallest class id.

That makes the separate, fused, blocked and traced paths agree exactly.
The compiled kernels return the number of distances they evaluated, which
is accumulated in ``counter``.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import gammaln

from .data import Dataset
from .trace import ObjectClass, Trace, record

KERNELS = ("gaussian", "epanechnikov", "uniform")
_KERNEL_CODE = {k: i for i, k in enumerate(KERNELS)}


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def weight(self, sq_dist: float) -> float:
        """Unnormalised window weight for a squared distance."""
        return _kernel_weight(_KERNEL_CODE[self.kind], sq_dist, 1.0 / (2.0 * self.bandwidth ** 2),
                              self.bandwidth ** 2)


class WorkCounter:
    def __init__(self):
        self.distances = 0

    def reset(self):
        self.distances = 0


counter = WorkCounter()


class NeighborList:
    """The k best (distance, index) candidates seen so far.

    Stored as a max-heap so the current worst candidate is at the top;
    on equal distance the smaller training index ranks better.
    """

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self._heap: list[tuple[float, int]] = []  # (-distance, -index)

    def __len__(self):
        return len(self._heap)

    def offer(self, index: int, distance: float) -> bool:
        item = (-distance, -index)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, item)
            return True
        if item > self._heap[0]:
            heapq.heapreplace(self._heap, item)
            return True
        return False

    @property
    def worst(self) -> tuple[int, float] | None:
        if not self._heap:
            return None
        d, i = self._heap[0]
        return -i, -d

    def entries(self) -> list[tuple[int, float]]:
        """(index, distance) pairs, nearest first."""
        return sorted(((-i, -d) for d, i in self._heap), key=lambda e: (e[1], e[0]))


# --------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True, inline="always")
def _sqdist(A, i, B, j):
    s = 0.0
    for f in range(A.shape[1]):
        diff = A[i, f] - B[j, f]
        s += diff * diff
    return s


@numba.njit(cache=True)
def _kernel_weight(kind, d2, inv_two_h2, h2):
    if kind == 0:
        return math.exp(-d2 * inv_two_h2)
    if kind == 1:
        if d2 < h2:
            return 1.0 - d2 / h2
        return 0.0
    if d2 <= h2:
        return 1.0
    return 0.0


@numba.njit(cache=True, inline="always")
def _heap_offer(hd, hi, size, k, d, j):
    """Max-heap on (distance, index) of capacity k; returns the new size."""
    if size < k:
        pos = size
        size += 1
    elif d < hd[0] or (d == hd[0] and j < hi[0]):
        pos = 0
        # sift down from the root, dropping the current worst
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            if child + 1 < size and (hd[child + 1] > hd[child] or
                                     (hd[child + 1] == hd[child] and hi[child + 1] > hi[child])):
                child += 1
            if hd[child] > d or (hd[child] == d and hi[child] > j):
                hd[pos] = hd[child]
                hi[pos] = hi[child]
                pos = child
            else:
                break
        hd[pos] = d
        hi[pos] = j
        return size
    else:
        return size
    # sift up
    while pos > 0:
        parent = (pos - 1) // 2
        if hd[parent] < d or (hd[parent] == d and hi[parent] < j):
            hd[pos] = hd[parent]
            hi[pos] = hi[parent]
            pos = parent
        else:
            break
    hd[pos] = d
    hi[pos] = j
    return size


@numba.njit(cache=True, inline="always")
def _vote(hi, size, labels, votes):
    votes[:] = 0
    for s in range(size):
        votes[labels[hi[s]]] += 1
    best = 0
    for c in range(1, votes.shape[0]):
        if votes[c] > votes[best]:
            best = c
    return best


@numba.njit(cache=True, inline="always")
def _argmax_first(totals):
    best = 0
    for c in range(1, totals.shape[0]):
        if totals[c] > totals[best]:
            best = c
    return best


@numba.njit(cache=True)
def _knn_kernel(RT, rt_labels, P, k, n_classes, out, nbr_idx, nbr_d2):
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    votes = np.empty(n_classes, dtype=np.int64)
    count = 0
    for i in range(P.shape[0]):
        size = 0
        for j in range(RT.shape[0]):
            d2 = _sqdist(P, i, RT, j)
            count += 1
            size = _heap_offer(hd, hi, size, k, d2, j)
        out[i] = _vote(hi, size, rt_labels, votes)
        nbr_idx[i, :] = hi
        nbr_d2[i, :] = hd
    return count


@numba.njit(cache=True)
def _prw_kernel(RT, rt_labels, P, n_classes, kind, inv_two_h2, h2, out, totals_out):
    totals = np.empty(n_classes)
    count = 0
    for i in range(P.shape[0]):
        totals[:] = 0.0
        for j in range(RT.shape[0]):
            d2 = _sqdist(P, i, RT, j)
            count += 1
            totals[rt_labels[j]] += _kernel_weight(kind, d2, inv_two_h2, h2)
        out[i] = _argmax_first(totals)
        totals_out[i, :] = totals
    return count


@numba.njit(cache=True)
def _fused_kernel(RT, rt_labels, P, k, n_classes, kind, inv_two_h2, h2, knn_out, prw_out):
    hd = np.empty(k)
    hi = np.empty(k, dtype=np.int64)
    votes = np.empty(n_classes, dtype=np.int64)
    totals = np.empty(n_classes)
    count = 0
    for i in range(P.shape[0]):
        size = 0
        totals[:] = 0.0
        for j in range(RT.shape[0]):
            d2 = _sqdist(P, i, RT, j)
            count += 1
            size = _heap_offer(hd, hi, size, k, d2, j)
            totals[rt_labels[j]] += _kernel_weight(kind, d2, inv_two_h2, h2)
        knn_out[i] = _vote(hi, size, rt_labels, votes)
        prw_out[i] = _argmax_first(totals)
    return count


@numba.njit(cache=True)
def _knn_blocked_kernel(RT, rt_labels, P, k, n_classes, block, out):
    hd = np.empty((block, k))
    hi = np.empty((block, k), dtype=np.int64)
    sizes = np.empty(block, dtype=np.int64)
    votes = np.empty(n_classes, dtype=np.int64)
    count = 0
    n_p = P.shape[0]
    for q0 in range(0, n_p, block):
        q1 = min(q0 + block, n_p)
        sizes[:] = 0
        for j in range(RT.shape[0]):
            for q in range(q0, q1):
                d2 = _sqdist(P, q, RT, j)
                count += 1
                b = q - q0
                sizes[b] = _heap_offer(hd[b], hi[b], sizes[b], k, d2, j)
        for q in range(q0, q1):
            b = q - q0
            out[q] = _vote(hi[b], sizes[b], rt_labels, votes)
    return count


# --------------------------------------------------------------------------
# public API


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cannot compare points of shapes {a.shape} and {b.shape}")
    return math.sqrt(_sqdist(a[None, :], 0, b[None, :], 0))


def _check(RT: Dataset, P: Dataset):
    if RT.n_points == 0:
        raise ValueError("reference set is empty")
    if RT.n_features != P.n_features:
        raise ValueError(f"reference points have {RT.n_features} features, queries {P.n_features}")


def _check_k(RT: Dataset, k: int):
    if not 1 <= k <= RT.n_points:
        raise ValueError(f"k={k} outside [1, {RT.n_points}]")


def _kernel_args(kernel: KernelSpec):
    h = kernel.bandwidth
    return _KERNEL_CODE[kernel.kind], 1.0 / (2.0 * h * h), h * h


def knn_search(RT: Dataset, P: Dataset, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and Euclidean distances of the k nearest references, nearest first."""
    _check(RT, P)
    _check_k(RT, k)
    out = np.empty(P.n_points, dtype=np.int64)
    nbr_idx = np.empty((P.n_points, k), dtype=np.int64)
    nbr_d2 = np.empty((P.n_points, k))
    counter.distances += _knn_kernel(RT.features, RT.labels, P.features, k, RT.class_count,
                                     out, nbr_idx, nbr_d2)
    order = np.lexsort((nbr_idx, nbr_d2), axis=1) if P.n_points else nbr_idx
    rows = np.arange(P.n_points)[:, None]
    return nbr_idx[rows, order], np.sqrt(nbr_d2[rows, order])


def knn_predict(RT: Dataset, P: Dataset, k: int, trace: Trace | None = None) -> np.ndarray:
    """Majority vote of the k nearest reference points for every query."""
    _check(RT, P)
    _check_k(RT, k)
    if trace is not None:
        return _knn_reference(RT, P, k, trace)
    out = np.empty(P.n_points, dtype=np.int64)
    nbr_idx = np.empty((P.n_points, k), dtype=np.int64)
    nbr_d2 = np.empty((P.n_points, k))
    counter.distances += _knn_kernel(RT.features, RT.labels, P.features, k, RT.class_count,
                                     out, nbr_idx, nbr_d2)
    return out


def prw_class_totals(RT: Dataset, P: Dataset, kernel: KernelSpec) -> np.ndarray:
    """(queries, classes) sums of unnormalised kernel weights."""
    _check(RT, P)
    out = np.empty(P.n_points, dtype=np.int64)
    totals = np.empty((P.n_points, RT.class_count))
    counter.distances += _prw_kernel(RT.features, RT.labels, P.features, RT.class_count,
                                     *_kernel_args(kernel), out, totals)
    return totals


def prw_predict(RT: Dataset, P: Dataset, kernel: KernelSpec) -> np.ndarray:
    """Class with the largest kernel-weighted total; all-zero totals give class 0."""
    _check(RT, P)
    out = np.empty(P.n_points, dtype=np.int64)
    totals = np.empty((P.n_points, RT.class_count))
    counter.distances += _prw_kernel(RT.features, RT.labels, P.features, RT.class_count,
                                     *_kernel_args(kernel), out, totals)
    return out


@dataclass
class FusedResult:
    knn_labels: np.ndarray
    prw_labels: np.ndarray
    test_ns: int
    distances: int


def fused_predict(RT: Dataset, P: Dataset, k: int, kernel: KernelSpec) -> FusedResult:
    """k-NN and Parzen-window labels from a single pass over every (query, reference) pair."""
    _check(RT, P)
    _check_k(RT, k)
    knn_out = np.empty(P.n_points, dtype=np.int64)
    prw_out = np.empty(P.n_points, dtype=np.int64)
    t0 = time.perf_counter_ns()
    n = _fused_kernel(RT.features, RT.labels, P.features, k, RT.class_count,
                      *_kernel_args(kernel), knn_out, prw_out)
    elapsed = time.perf_counter_ns() - t0
    counter.distances += n
    return FusedResult(knn_out, prw_out, elapsed, n)


def blocked_predict(RT: Dataset, P: Dataset, k: int, block_size: int,
                    trace: Trace | None = None) -> np.ndarray:
    """k-NN where each reference row is reused by ``block_size`` queries before moving on."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    _check(RT, P)
    _check_k(RT, k)
    if trace is not None:
        return _knn_reference(RT, P, k, trace, block_size)
    out = np.empty(P.n_points, dtype=np.int64)
    block = max(1, min(block_size, P.n_points))
    counter.distances += _knn_blocked_kernel(RT.features, RT.labels, P.features, k,
                                             RT.class_count, block, out)
    return out


def _vote_py(entries, labels, n_classes) -> int:
    votes = [0] * n_classes
    for j, _ in entries:
        votes[labels[j]] += 1
    return max(range(n_classes), key=lambda c: (votes[c], -c))


def _knn_reference(RT: Dataset, P: Dataset, k: int, trace: Trace, block_size: int | None = None):
    """Plain-Python k-NN recording every reference-row and query touch.

    Unblocked: one query per outer iteration, every reference row per inner
    iteration.  Blocked: a reference row is loaded once per block and the
    queries of the block reuse it within the same iteration.
    """
    X, Q = RT.features, P.features
    labels = RT.labels.tolist()
    n_q = P.n_points
    block = block_size or 1
    out = np.empty(n_q, dtype=np.int64)
    for q0 in range(0, n_q, block):
        group = range(q0, min(q0 + block, n_q))
        lists = {q: NeighborList(k) for q in group}
        for j in range(RT.n_points):
            for pos, q in enumerate(group):
                record(trace, ObjectClass.PREDICTION_POINT, q)
                record(trace, ObjectClass.TRAINING_POINT, j, advance=(pos == 0))
                d2 = 0.0
                for f in range(X.shape[1]):
                    diff = Q[q, f] - X[j, f]
                    d2 += diff * diff
                counter.distances += 1
                lists[q].offer(j, d2)
        for q in group:
            out[q] = _vote_py(lists[q].entries(), labels, RT.class_count)
    return out


# --------------------------------------------------------------------------
# density estimation


def _log_unit_ball_volume(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)


def prw_density(RT: Dataset | np.ndarray, x, kernel: KernelSpec) -> float:
    """Normalised kernel density estimate (1 / (n h^d)) sum K((x - x_i) / h)."""
    X = RT.features if isinstance(RT, Dataset) else np.atleast_2d(np.asarray(RT, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n, d = X.shape
    if x.shape[0] != d:
        raise ValueError(f"x has {x.shape[0]} features, reference set {d}")
    h = kernel.bandwidth
    u2 = (((X - x) / h) ** 2).sum(axis=1)
    if kernel.kind == "gaussian":
        k = np.exp(-0.5 * u2) * (2.0 * math.pi) ** (-0.5 * d)
    elif kernel.kind == "epanechnikov":
        norm = (d + 2) / 2.0 * math.exp(-_log_unit_ball_volume(d))
        k = np.where(u2 < 1.0, norm * (1.0 - u2), 0.0)
    else:
        k = np.where(u2 <= 1.0, math.exp(-_log_unit_ball_volume(d)), 0.0)
    return float(k.sum() / (n * h ** d))


def silverman_bandwidth(values) -> float:
    """Rule-of-thumb bandwidth for 1-D samples: 0.9 min(sd, IQR/1.34) n^(-1/5)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("need at least two samples")
    sd = v.std(ddof=1)
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        raise ValueError("samples have zero spread")
    return 0.9 * spread * v.size ** -0.2
