"""Dataset containers, loaders (libsvm, IDX, CSV), synthetic data and splits.

All features are stored dense, row-major, as float64.  Labels are stored
as integers 0..C-1; the linear models translate to -1/+1 themselves.

Random numbers come from numpy's PCG64 bit generator so goldens are
portable across platforms and numpy versions that keep PCG64 stable.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


class ConsistencyError(DataFormatError):
    """Paired files disagree (e.g. IDX image and label counts)."""


class EmptyDatasetError(ValueError):
    def __init__(self, msg: str = "empty dataset"):
        super().__init__(msg)


def make_rng(*seed_words: int) -> np.random.Generator:
    """PCG64 generator seeded from one or more 64-bit words."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(w) for w in seed_words])))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = ""

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels length must equal features row count")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n_points

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_count,
                       self.name if name is None else name)

    def signed_labels(self) -> np.ndarray:
        """Labels as -1/+1 floats (binary datasets only)."""
        if self.class_count != 2:
            raise ValueError("signed labels need a binary dataset")
        return np.where(self.labels == 1, 1.0, -1.0)


# --------------------------------------------------------------------------
# libsvm text


def _map_labels(raw: list[float], origin: str) -> tuple[np.ndarray, int]:
    values = set(raw)
    if values <= {-1.0, 1.0}:
        return np.array([1 if v > 0 else 0 for v in raw], dtype=np.int64), 2
    if values <= {0.0, 1.0}:
        return np.array(raw, dtype=np.int64), 2
    if all(v >= 0 and float(v).is_integer() for v in values):
        labels = np.array(raw, dtype=np.int64)
        return labels, int(labels.max()) + 1
    raise DataFormatError(f"{origin}: labels must be -1/+1, 0/1 or non-negative integers")


def load_libsvm(path, n_features: int | None = None) -> Dataset:
    rows: list[list[tuple[int, float]]] = []
    raw_labels: list[float] = []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                raw_labels.append(float(tokens[0]))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad label {tokens[0]!r}") from None
            entries = []
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"{path}:{lineno}: expected idx:val, got {tok!r}")
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: bad entry {tok!r}") from None
                if idx < 1:
                    raise DataFormatError(f"{path}:{lineno}: feature index must be >= 1, got {idx}")
                entries.append((idx, val))
                max_index = max(max_index, idx)
            rows.append(entries)
    if not rows:
        raise EmptyDatasetError()
    if n_features is None:
        n_features = max_index
    elif max_index > n_features:
        raise DataFormatError(f"{path}: feature index {max_index} exceeds n_features={n_features}")
    x = np.zeros((len(rows), n_features))
    for r, entries in enumerate(rows):
        for idx, val in entries:
            x[r, idx - 1] = val
    labels, class_count = _map_labels(raw_labels, str(path))
    return Dataset(x, labels, class_count, os.path.basename(str(path)))


def save_libsvm(ds: Dataset, path) -> None:
    """Write sparse libsvm text; binary labels are written as -1/+1."""
    with open(path, "w") as fh:
        for row, label in zip(ds.features, ds.labels):
            if ds.class_count == 2:
                head = "+1" if label == 1 else "-1"
            else:
                head = str(int(label))
            nz = np.flatnonzero(row)
            body = " ".join(f"{i + 1}:{float(row[i])!r}" for i in nz)
            fh.write(f"{head} {body}\n" if body else f"{head}\n")


# --------------------------------------------------------------------------
# MNIST IDX

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _open_maybe_gz(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def _read_idx(path, magic: int, header_dims: int) -> tuple[tuple[int, ...], bytes]:
    with _open_maybe_gz(path) as fh:
        blob = fh.read()
    head_len = 4 + 4 * header_dims
    if len(blob) < 4:
        raise OSError(f"{path}: truncated IDX header")
    (got,) = struct.unpack(">I", blob[:4])
    if got != magic:
        raise DataFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(blob) < head_len:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{header_dims}I", blob[4:head_len])
    expected = int(np.prod(dims))
    payload = blob[head_len:]
    if len(payload) < expected:
        raise OSError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    return dims, payload[:expected]


def load_mnist_idx(images_path, labels_path) -> Dataset:
    (count, rows, cols), pixels = _read_idx(images_path, IMAGE_MAGIC, 3)
    (label_count,), raw_labels = _read_idx(labels_path, LABEL_MAGIC, 1)
    if count != label_count:
        raise ConsistencyError(f"image count {count} != label count {label_count}")
    if count == 0:
        raise EmptyDatasetError()
    x = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    y = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    return Dataset(x, y, 10, os.path.basename(str(images_path)))


def write_mnist_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (n, 28, 28) and labels (n,) as IDX, gzipped if the path ends in .gz."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    def opener(p):
        return gzip.open(p, "wb") if str(p).endswith(".gz") else open(p, "wb")

    with opener(images_path) as fh:
        fh.write(struct.pack(">4I", IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with opener(labels_path) as fh:
        fh.write(struct.pack(">2I", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# --------------------------------------------------------------------------
# CSV


def load_csv(path, header: bool = False, delimiter: str = ",") -> Dataset:
    """Numeric CSV; the last column holds integer class labels."""
    try:
        table = np.loadtxt(path, delimiter=delimiter, skiprows=1 if header else 0, ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if table.size == 0:
        raise EmptyDatasetError()
    labels, class_count = _map_labels(list(table[:, -1]), str(path))
    return Dataset(table[:, :-1], labels, class_count, os.path.basename(str(path)))


# --------------------------------------------------------------------------
# synthetic data and preprocessing


def synth_blobs(seed: int, n: int, d: int, classes: int, spread: float, scale: float = 1.0) -> Dataset:
    """Gaussian blobs around hypercube vertices.

    Centers are distinct vertices of [-scale, scale]^d when 2**d >= classes,
    otherwise uniform points inside the cube.  Labels are balanced to within
    one point and appear in shuffled order.
    """
    if classes < 1 or d < 1:
        raise ValueError("need classes >= 1 and d >= 1")
    if classes > n:
        raise ValueError(f"classes ({classes}) > n ({n})")
    if spread < 0:
        raise ValueError("spread must be nonnegative")
    rng = make_rng(seed)
    if d <= 20 and 2 ** d < classes:
        centers = rng.uniform(-scale, scale, size=(classes, d))
    else:
        if d <= 20:
            codes = rng.choice(2 ** d, size=classes, replace=False)
            signs = (codes[:, None] >> np.arange(d)) & 1
        else:
            signs = rng.integers(0, 2, size=(classes, d))
            while len({row.tobytes() for row in signs}) < classes:
                signs = rng.integers(0, 2, size=(classes, d))
        centers = scale * (2.0 * signs - 1.0)
    labels = rng.permutation(np.arange(n) % classes)
    noise = rng.standard_normal((n, d))
    x = centers[labels] + spread * noise
    return Dataset(x, labels, classes, f"blobs(seed={seed},n={n},d={d},c={classes},s={spread})")


def standardize(ds: Dataset) -> Dataset:
    """Zero mean, unit population variance per column; constant columns become 0."""
    if ds.n_points < 1:
        raise EmptyDatasetError()
    x = ds.features
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    centered = x - mean
    safe = np.where(std > 0, std, 1.0)
    out = np.where(std > 0, centered / safe, 0.0)
    return Dataset(out, ds.labels, ds.class_count, ds.name)


@dataclass(frozen=True)
class SplitPlan:
    fold_count: int
    assignments: np.ndarray
    seed: int

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.fold_count).tolist()


def kfold_split(ds: Dataset | int, k: int, seed: int) -> SplitPlan:
    """Shuffle the index set (Fisher-Yates via PCG64), then cut it into k
    contiguous chunks; the first ``n % k`` folds get one extra point."""
    n = ds if isinstance(ds, int) else ds.n_points
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k ({k}) > number of points ({n})")
    order = make_rng(seed).permutation(n)
    sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
    assignments = np.empty(n, dtype=np.int64)
    start = 0
    for fold, size in enumerate(sizes):
        assignments[order[start:start + size]] = fold
        start += size
    return SplitPlan(k, assignments, seed)


def shuffle_indices(n: int, seed: int, epoch: int) -> np.ndarray:
    """Reproducible permutation of 0..n-1, distinct per (seed, epoch)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return make_rng(seed, epoch).permutation(n)
