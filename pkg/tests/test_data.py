import gzip

import numpy as np
import pytest

from odenet.data import (
    Dataset,
    accuracy,
    classify,
    gen_circle,
    gen_sinusoid,
    load_csv_dataset,
    load_mnist_idx,
    minmax_scale,
    one_hot,
    save_csv_dataset,
    split,
    write_idx,
)
from odenet.exceptions import ShapeError


def test_sinusoid():
    d = gen_sinusoid(1000)
    assert len(d) == 1000 and d.n == d.m == 1
    assert d.inputs[0, 0] == 0.0 and d.targets[0, 0] == 0.0
    assert d.inputs[-1, 0] == 0.999
    assert gen_sinusoid(8).targets[1, 0] == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(gen_sinusoid(50).targets, gen_sinusoid(50).targets)


def test_circle():
    d = gen_circle(10000, 3)
    assert d.n == 2 and d.m == 1 and d.task == "binary"
    dist = np.linalg.norm(d.inputs - 0.5, axis=1)
    np.testing.assert_array_equal(d.targets[:, 0], np.where(dist < 0.3, 0.0, 1.0))
    assert abs(d.targets.mean() - (1 - np.pi * 0.09)) <= 0.02
    assert np.array_equal(gen_circle(20, 3).inputs, gen_circle(20, 3).inputs)
    from odenet.data import circle_label

    assert circle_label([0.5, 0.5])[0] == 0.0
    assert circle_label([0.5, 0.8])[0] == 1.0


def _write_idx_pair(tmp_path, images, labels, gz=False):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, images)
    write_idx(lp, labels)
    if gz:
        for p in (ip, lp):
            raw = p.read_bytes()
            with gzip.open(str(p) + ".gz", "wb") as fh:
                fh.write(raw)
        return tmp_path / "img.idx.gz", tmp_path / "lab.idx.gz"
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, gz):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(7, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = rng.integers(0, 10, size=7, dtype=np.uint8)
    ip, lp = _write_idx_pair(tmp_path, images, labels, gz)
    assert ip.read_bytes()[:4] == bytes([0, 0, 8, 3]) or gz
    d = load_mnist_idx(ip, lp)
    assert d.n == 784 and d.m == 10 and d.task == "multiclass"
    assert np.array_equal(np.round(d.inputs * 255).astype(np.uint8).reshape(7, 28, 28), images)
    assert d.inputs[0, 0] == 1.0
    assert np.array_equal(d.labels(), labels)
    assert len(load_mnist_idx(ip, lp, limit=3)) == 3


def test_idx_errors(tmp_path):
    images = np.zeros((3, 2, 2), np.uint8)
    ip, lp = _write_idx_pair(tmp_path, images, np.zeros(2, np.uint8))
    with pytest.raises(ValueError, match="3 images but 2 labels"):
        load_mnist_idx(ip, lp)
    with pytest.raises(ValueError, match="bad magic"):
        load_mnist_idx(lp, ip)
    raw = ip.read_bytes()
    ip.write_bytes(raw[:-1])
    with pytest.raises(ValueError):
        load_mnist_idx(ip, lp)


def test_split():
    d = Dataset(np.arange(10.0)[:, None], np.arange(10.0)[:, None])
    a, b = split(d, 0.8, 1)
    assert (len(a), len(b)) == (8, 2)
    a2, _ = split(d, 0.8, 1)
    assert np.array_equal(a.inputs, a2.inputs)
    assert sorted(np.concatenate([a.inputs[:, 0], b.inputs[:, 0]])) == list(range(10))
    with pytest.raises(ValueError):
        split(d, 0.01, 0)
    with pytest.raises(ValueError):
        split(d, 1.0, 0)


def test_accuracy_rules():
    assert accuracy([[0.2], [0.9]], [[0.0], [1.0]], "binary") == 1.0
    assert classify([[0.5]], "binary")[0] == 1
    assert classify([[0.3, 0.3, 0.1]], "multiclass")[0] == 0
    assert accuracy([[0.1, 0.8], [0.6, 0.4]], one_hot([1, 1], 2), "multiclass") == 0.5
    with pytest.raises(ValueError):
        accuracy([[1.0]], [[1.0]], "regression")


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 1)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([[0.0], [2.0]]), "binary")
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 1)), np.array([[1.0, 1.0]]), "multiclass")
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf]]), np.zeros((1, 1)))


def test_csv_round_trip(tmp_path):
    d = gen_circle(20, 0)
    path = tmp_path / "c.csv"
    save_csv_dataset(d, path)
    back = load_csv_dataset(path, "binary")
    assert np.array_equal(back.inputs, d.inputs) and np.array_equal(back.targets, d.targets)


def test_minmax_scale():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    S, lo, hi = minmax_scale(X)
    np.testing.assert_array_equal(S, [[0.0, 0.0], [1.0, 0.0]])
