import numpy as np
import pytest

from corenet.data import Dataset, load_csv, make_blobs, make_digits, save_csv
from corenet.errors import FormatError


def test_csv_round_trip(tmp_path):
    data = Dataset(np.array([[0.5, -1.25], [3.0, 2.0]]), np.array([1, 0]))
    path = tmp_path / "d.csv"
    save_csv(data, path)
    back = load_csv(path)
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)


def test_csv_rejects_non_integer_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,f0\n1.5,2.0\n")
    with pytest.raises(FormatError):
        load_csv(path)


def test_csv_rejects_ragged_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,f0,f1\n1,2.0\n")
    with pytest.raises(FormatError):
        load_csv(path)


def test_csv_rejects_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("label,f0\n")
    with pytest.raises(FormatError):
        load_csv(path)


def test_blobs_shapes_and_determinism():
    a = make_blobs(200, 5, 3, seed=9)
    b = make_blobs(200, 5, 3, seed=9)
    assert a.features.shape == (200, 5)
    assert a.n_classes <= 3
    assert np.array_equal(a.features, b.features)
    assert set(a.splits) == {"train", "validation", "test"}
    total = sum(len(v) for v in a.splits.values())
    assert total == 200


def test_digits_nonnegative():
    d = make_digits(100, seed=4)
    assert d.features.shape == (100, 64)
    assert d.features.min() >= 0.0


def test_split_indices_disjoint():
    d = make_blobs(150, 4, 2, seed=1)
    seen = np.concatenate([d.splits[k] for k in ("train", "validation", "test")])
    assert len(np.unique(seen)) == 150


def test_rejects_non_finite():
    with pytest.raises(FormatError):
        Dataset(np.array([[np.inf]]), np.array([0]))
