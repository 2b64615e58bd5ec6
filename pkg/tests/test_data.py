import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locality_ml import data, linear, optim
from locality_ml.data import ConsistencyError, DataFormatError, Dataset, EmptyDatasetError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- libsvm

def test_libsvm_densifies_sparse_row(tmp_path):
    ds = data.load_libsvm(write(tmp_path, "a.txt", "+1 1:1.0 3:2.5\n"), n_features=3)
    assert ds.features.tolist() == [[1.0, 0.0, 2.5]]
    assert ds.labels.tolist() == [1]
    assert ds.class_count == 2


def test_libsvm_label_only_line_is_zero_row(tmp_path):
    ds = data.load_libsvm(write(tmp_path, "a.txt", "-1\n+1 2:1\n"))
    assert ds.features[0].tolist() == [0.0, 0.0]
    assert ds.labels.tolist() == [0, 1]


def test_libsvm_infers_feature_count(tmp_path):
    ds = data.load_libsvm(write(tmp_path, "a.txt", "+1 2:1\n-1 1:1\n"))
    assert (ds.n_points, ds.n_features) == (2, 2)
    assert ds.features.tolist() == [[0.0, 1.0], [1.0, 0.0]]
    assert ds.labels.tolist() == [1, 0]


def test_libsvm_zero_one_and_multiclass_labels(tmp_path):
    assert data.load_libsvm(write(tmp_path, "b.txt", "0 1:1\n1 1:2\n")).labels.tolist() == [0, 1]
    ds = data.load_libsvm(write(tmp_path, "m.txt", "0 1:1\n2 1:2\n5 1:3\n"))
    assert ds.labels.tolist() == [0, 2, 5] and ds.class_count == 6


def test_libsvm_comments_and_blank_lines(tmp_path):
    ds = data.load_libsvm(write(tmp_path, "a.txt", "# header\n\n+1 1:3 # trailing\n"))
    assert ds.features.tolist() == [[3.0]]


@pytest.mark.parametrize("text, line", [
    ("+1 1:1\n+1 0:1\n", 2),
    ("+1 -3:1\n", 1),
    ("+1 1:1\n-1 2\n", 2),
    ("+1 a:1\n", 1),
    ("+1 1:x\n", 1),
    ("pos 1:1\n", 1),
])
def test_libsvm_parse_errors_carry_line_number(tmp_path, text, line):
    with pytest.raises(DataFormatError, match=f":{line}:"):
        data.load_libsvm(write(tmp_path, "bad.txt", text))


def test_libsvm_empty_file(tmp_path):
    with pytest.raises(EmptyDatasetError, match="empty dataset"):
        data.load_libsvm(write(tmp_path, "e.txt", "\n# nothing\n"))


def test_libsvm_index_beyond_declared_width(tmp_path):
    with pytest.raises(DataFormatError):
        data.load_libsvm(write(tmp_path, "a.txt", "+1 4:1\n"), n_features=3)


@pytest.mark.parametrize("classes", [2, 4])
def test_libsvm_round_trip(tmp_path, classes):
    ds = data.synth_blobs(3, 40, 5, classes, 1.0)
    x = ds.features.copy()
    x[x < 0] = 0.0  # exercise sparse entries
    ds = Dataset(x, ds.labels, classes)
    path = tmp_path / "rt.txt"
    data.save_libsvm(ds, path)
    back = data.load_libsvm(path, n_features=5)
    np.testing.assert_allclose(back.features, ds.features, rtol=0, atol=1e-12)
    assert back.labels.tolist() == ds.labels.tolist()


# ---------------------------------------------------------------- IDX

def idx_pair(tmp_path, n=3, gz=False):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = np.arange(n, dtype=np.uint8) % 10
    suffix = ".gz" if gz else ""
    ip, lp = tmp_path / f"img{suffix}", tmp_path / f"lab{suffix}"
    data.write_mnist_idx(images, labels, ip, lp)
    return images, labels, ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip_and_scaling(tmp_path, gz):
    images, labels, ip, lp = idx_pair(tmp_path, gz=gz)
    ds = data.load_mnist_idx(ip, lp)
    assert (ds.n_points, ds.n_features, ds.class_count) == (3, 784, 10)
    assert ds.features[0, 0] == 1.0
    np.testing.assert_array_equal(ds.features, images.reshape(3, -1) / 255.0)
    assert ds.labels.tolist() == labels.tolist()


def test_idx_bad_magic(tmp_path):
    _, _, ip, lp = idx_pair(tmp_path)
    with pytest.raises(DataFormatError, match="magic"):
        data.load_mnist_idx(lp, ip)


def test_idx_count_mismatch(tmp_path):
    _, _, ip, _ = idx_pair(tmp_path, n=3)
    lp = tmp_path / "lab2"
    lp.write_bytes(struct.pack(">2I", data.LABEL_MAGIC, 2) + bytes([1, 2]))
    with pytest.raises(ConsistencyError):
        data.load_mnist_idx(ip, lp)


def test_idx_truncated_payload(tmp_path):
    _, _, ip, lp = idx_pair(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-10])
    with pytest.raises(OSError):
        data.load_mnist_idx(ip, lp)


def test_idx_zero_count_is_empty(tmp_path):
    ip, lp = tmp_path / "i.gz", tmp_path / "l.gz"
    with gzip.open(ip, "wb") as fh:
        fh.write(struct.pack(">4I", data.IMAGE_MAGIC, 0, 28, 28))
    with gzip.open(lp, "wb") as fh:
        fh.write(struct.pack(">2I", data.LABEL_MAGIC, 0))
    with pytest.raises(EmptyDatasetError):
        data.load_mnist_idx(ip, lp)


# ---------------------------------------------------------------- CSV

def test_csv_last_column_is_label(tmp_path):
    ds = data.load_csv(write(tmp_path, "a.csv", "x,y,label\n1,2,0\n3,4,1\n"), header=True)
    assert ds.features.tolist() == [[1, 2], [3, 4]]
    assert ds.labels.tolist() == [0, 1]


def test_csv_without_header_and_bad_cell(tmp_path):
    assert data.load_csv(write(tmp_path, "a.csv", "1;2;2\n"), delimiter=";").class_count == 3
    with pytest.raises(DataFormatError):
        data.load_csv(write(tmp_path, "b.csv", "1,x,0\n"))


# ---------------------------------------------------------------- synthetic data

def test_synth_zero_spread_sits_on_centers():
    ds = data.synth_blobs(5, 50, 3, 2, 0.0)
    for c in range(2):
        rows = ds.features[ds.labels == c]
        assert np.all(rows == rows[0])
        assert set(np.abs(rows[0])) == {1.0}
    assert not np.array_equal(ds.features[ds.labels == 0][0], ds.features[ds.labels == 1][0])


def test_synth_deterministic_and_balanced():
    a = data.synth_blobs(9, 101, 4, 3, 0.7)
    b = data.synth_blobs(9, 101, 4, 3, 0.7)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    counts = np.bincount(a.labels)
    assert counts.max() - counts.min() <= 1
    assert not np.array_equal(a.features, data.synth_blobs(10, 101, 4, 3, 0.7).features)


def test_synth_more_classes_than_vertices():
    ds = data.synth_blobs(0, 30, 2, 6, 0.0)
    assert len({tuple(r) for r in ds.features}) == 6


def test_synth_rejects_more_classes_than_points():
    with pytest.raises(ValueError):
        data.synth_blobs(0, 3, 2, 4, 1.0)


def test_synth_is_linearly_separable():
    ds = data.synth_blobs(1, 1000, 16, 2, 0.5)
    model, _ = linear.train_linear(linear.LinearModel.zeros(16, "logistic"), ds, 1000, 300,
                                   optim.OptimizerState("sgd", 1.0))
    assert (linear.predict_linear(model, ds) == ds.labels).mean() >= 0.95


# ---------------------------------------------------------------- standardize

def test_standardize_examples():
    ds = Dataset(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), np.zeros(3, int), 1)
    out = data.standardize(ds).features
    np.testing.assert_allclose(out[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    assert out[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_standardize_idempotent():
    ds = data.standardize(data.synth_blobs(2, 200, 6, 3, 2.0))
    np.testing.assert_allclose(ds.features.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(ds.features.std(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(data.standardize(ds).features, ds.features, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- splits and shuffles

def test_kfold_exact_division():
    plan = data.kfold_split(10, 5, 0)
    assert plan.fold_sizes() == [2] * 5
    assert sorted(np.concatenate([plan.fold_indices(f) for f in range(5)]).tolist()) == list(range(10))


def test_kfold_remainder_and_golden():
    plan = data.kfold_split(11, 5, 3)
    assert plan.fold_sizes() == [3, 2, 2, 2, 2]
    assert plan.assignments.tolist() == [0, 1, 1, 4, 2, 3, 2, 0, 4, 0, 3]
    np.testing.assert_array_equal(plan.assignments, data.kfold_split(11, 5, 3).assignments)


def test_kfold_errors():
    with pytest.raises(ValueError):
        data.kfold_split(4, 5, 0)
    with pytest.raises(ValueError):
        data.kfold_split(4, 1, 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 300), k=st.integers(2, 20), seed=st.integers(0, 2**63 - 1))
def test_kfold_partition_property(n, k, seed):
    k = min(k, n)
    plan = data.kfold_split(n, k, seed)
    sizes = plan.fold_sizes()
    assert sum(sizes) == n and max(sizes) - min(sizes) <= 1
    for f in range(k):
        tr, te = plan.train_indices(f), plan.fold_indices(f)
        assert len(np.intersect1d(tr, te)) == 0 and len(tr) + len(te) == n


def test_shuffle_goldens():
    assert data.shuffle_indices(1, 0, 0).tolist() == [0]
    assert data.shuffle_indices(16, 7, 0).tolist() == [3, 10, 6, 8, 1, 14, 0, 7, 4, 13, 15, 2, 12, 5, 9, 11]
    assert data.shuffle_indices(16, 7, 1).tolist() == [7, 8, 1, 15, 14, 0, 6, 10, 11, 9, 3, 4, 2, 12, 5, 13]


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 500), seed=st.integers(0, 2**64 - 1), epoch=st.integers(0, 1000))
def test_shuffle_is_pure_permutation(n, seed, epoch):
    p = data.shuffle_indices(n, seed, epoch)
    assert sorted(p.tolist()) == list(range(n))
    np.testing.assert_array_equal(p, data.shuffle_indices(n, seed, epoch))


# ---------------------------------------------------------------- Dataset

def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.zeros(3, int), 1)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)
    ds = Dataset(np.zeros((2, 2)), np.array([0, 1]), 2)
    assert ds.signed_labels().tolist() == [-1.0, 1.0]
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    assert ds.subset([1]).labels.tolist() == [1]
