"""Independent reference implementations used by the tests.

They sum squared differences left to right over features (``cumsum``) and
add kernel weights in reference-point order, so exact ties resolve the same
way as in the library and labels can be compared with zero tolerance.
"""
import math

import numpy as np

from locality_ml.data import Dataset


def sq_distances(RT: Dataset, P: Dataset) -> np.ndarray:
    """(queries, references) squared distances, features accumulated in ascending order."""
    diff = P.features[:, None, :] - RT.features[None, :, :]
    return np.cumsum(diff * diff, axis=2)[:, :, -1] if RT.n_features else np.zeros((P.n_points, RT.n_points))


def knn_full_sort(RT: Dataset, P: Dataset, k: int) -> np.ndarray:
    """Sort every distance (ties by reference index), vote, ties to the smallest class."""
    d2 = sq_distances(RT, P)
    out = np.empty(P.n_points, dtype=np.int64)
    idx = np.arange(RT.n_points)
    for q in range(P.n_points):
        order = np.lexsort((idx, d2[q]))[:k]
        votes = np.bincount(RT.labels[order], minlength=RT.class_count)
        out[q] = int(np.argmax(votes))
    return out


def kernel_weight(kind: str, d2: float, h: float) -> float:
    if kind == "gaussian":
        return math.exp(-d2 * (1.0 / (2.0 * h * h)))
    if kind == "epanechnikov":
        return 1.0 - d2 / (h * h) if d2 < h * h else 0.0
    return 1.0 if d2 <= h * h else 0.0


def prw_naive(RT: Dataset, P: Dataset, kind: str, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Double loop over (query, reference); returns (labels, class totals)."""
    d2 = sq_distances(RT, P)
    totals = np.zeros((P.n_points, RT.class_count))
    labels = RT.labels.tolist()
    for q in range(P.n_points):
        row = totals[q]
        for j in range(RT.n_points):
            row[labels[j]] += kernel_weight(kind, float(d2[q, j]), h)
    return np.argmax(totals, axis=1).astype(np.int64), totals


def random_instance(rng: np.random.Generator, n_rt: int, n_p: int, d: int, classes: int,
                    integer_grid: bool = False) -> tuple[Dataset, Dataset]:
    """Random reference/query sets; ``integer_grid`` draws features from {0,1,2} to force exact ties."""
    if integer_grid:
        X = rng.integers(0, 3, size=(n_rt, d)).astype(float)
        Q = rng.integers(0, 3, size=(n_p, d)).astype(float)
    else:
        X = rng.normal(size=(n_rt, d))
        Q = rng.normal(size=(n_p, d))
    y = rng.integers(0, classes, size=n_rt)
    return Dataset(X, y, classes), Dataset(Q, np.zeros(n_p, dtype=np.int64), classes)
