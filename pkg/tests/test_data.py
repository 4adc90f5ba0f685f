import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reve.data import (IdxFormatError, LabeledDataset, augment, batches, load_idx, normalize, simplex_centers,
                       synth_nuisance_blobs, write_idx)


def test_simplex_vertices_equidistant():
    c = simplex_centers(4, 5)
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)[np.triu_indices(4, 1)]
    np.testing.assert_allclose(d, d[0])
    np.testing.assert_allclose(np.linalg.norm(c, axis=1), 1.0)
    np.testing.assert_allclose(c.mean(axis=0), 0.0, atol=1e-15)


def test_noiseless_blobs_are_separable():
    ds = synth_nuisance_blobs(3, 2, 0, 1e-9, 300, seed=0)
    centers = simplex_centers(3, 2)
    nearest = np.argmin(np.linalg.norm(ds.inputs[:, None] - centers[None], axis=-1), axis=1)
    np.testing.assert_array_equal(nearest, ds.labels)


@pytest.mark.parametrize("k,n", [(2, 2001), (3, 100), (5, 7)])
def test_labels_balanced(k, n):
    counts = np.bincount(synth_nuisance_blobs(k, 4, 3, 0.5, n, seed=1).labels, minlength=k)
    assert counts.max() - counts.min() <= 1


def test_seed_changes_samples_not_moments():
    a = synth_nuisance_blobs(2, 2, 30, 0.6, 20_000, seed=1)
    b = synth_nuisance_blobs(2, 2, 30, 0.6, 20_000, seed=2)
    assert not np.array_equal(a.inputs, b.inputs)
    for c in range(2):
        xa, xb = a.inputs[a.labels == c], b.inputs[b.labels == c]
        se = np.sqrt(2.0 / len(xa))
        assert np.all(np.abs(xa.mean(0) - xb.mean(0)) <= 5 * se)
        np.testing.assert_allclose(xa.std(0), xb.std(0), rtol=0.05)


def test_blobs_deterministic_per_seed():
    a, b = (synth_nuisance_blobs(2, 2, 5, 0.6, 50, seed=7) for _ in range(2))
    assert a.inputs.tobytes() == b.inputs.tobytes()


def test_idx_header_and_scaling(tmp_path):
    images = np.array([[[0, 255], [128, 1]], [[255, 255], [0, 0]]], dtype=np.uint8)
    write_idx(tmp_path / "i", tmp_path / "l", images, [3, 1])
    raw = (tmp_path / "i").read_bytes()
    assert struct.unpack(">IIII", raw[:16]) == (0x803, 2, 2, 2)
    ds = load_idx(tmp_path / "i", tmp_path / "l")
    assert ds.inputs.shape == (2, 1, 2, 2)
    assert ds.inputs[0, 0, 0, 1] == 1.0 and ds.inputs[0, 0, 0, 0] == 0.0
    np.testing.assert_array_equal(ds.labels, [3, 1])
    assert len(load_idx(tmp_path / "i", tmp_path / "l", limit=1)) == 1


def test_idx_count_mismatch(tmp_path):
    write_idx(tmp_path / "i", tmp_path / "l", np.zeros((2, 2, 2)), [0, 1, 1])
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_idx_bad_magic(tmp_path):
    write_idx(tmp_path / "i", tmp_path / "l", np.zeros((1, 2, 2)), [0])
    raw = bytearray((tmp_path / "i").read_bytes())
    raw[3] = 0x01
    (tmp_path / "i").write_bytes(bytes(raw))
    with pytest.raises(IdxFormatError, match="magic"):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_normalization_uses_train_statistics():
    train = synth_nuisance_blobs(2, 2, 4, 0.6, 500, seed=0)
    test = synth_nuisance_blobs(2, 2, 4, 0.6, 500, seed=1)
    ntrain, ntest = normalize(train, test)
    assert np.abs(ntrain.inputs.mean(0)).max() <= 1e-8
    assert np.abs(ntrain.inputs.std(0) - 1).max() <= 1e-8
    np.testing.assert_array_equal(ntest.mean, ntrain.mean)
    np.testing.assert_allclose(ntest.inputs, (test.inputs - train.inputs.mean(0)) / train.inputs.std(0))


def test_image_normalization_is_per_channel():
    x = np.random.default_rng(0).normal([1.0, -2.0, 5.0], [1.0, 3.0, 0.5], size=(40, 6, 6, 3)).transpose(0, 3, 1, 2)
    n = normalize(LabeledDataset(x, np.zeros(40, int), 1))
    assert np.abs(n.inputs.mean(axis=(0, 2, 3))).max() <= 1e-8
    assert np.abs(n.inputs.std(axis=(0, 2, 3)) - 1).max() <= 1e-8


def test_constant_feature_normalizes_without_nan():
    n = normalize(LabeledDataset(np.ones((5, 2)), np.zeros(5, int), 1))
    assert np.all(np.isfinite(n.inputs))


def test_augment_noop():
    x = np.random.default_rng(0).normal(size=(3, 2, 4, 4))
    np.testing.assert_array_equal(augment(x, 0, None, 0.0, np.random.default_rng(1)), x)


def test_augment_forced_flip():
    x = np.array([[[[1.0, 2.0]]]])
    np.testing.assert_array_equal(augment(x, 0, None, 1.0, np.random.default_rng(0)), [[[[2.0, 1.0]]]])


def test_augment_crop_too_large():
    with pytest.raises(ValueError):
        augment(np.zeros((1, 1, 4, 4)), 1, 7, 0.0, np.random.default_rng(0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_augment_shift_within_pad(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(1, 2, size=(2, 3, 32, 32))  # strictly positive so padding is recognisable
    out = augment(x, 4, 32, 0.0, rng)
    assert out.shape == x.shape
    for i in range(2):
        found = False
        for dy in range(-4, 5):
            for dx in range(-4, 5):
                shifted = np.zeros((3, 40, 40))
                shifted[:, 4:36, 4:36] = x[i]
                if np.array_equal(shifted[:, 4 + dy:36 + dy, 4 + dx:36 + dx], out[i]):
                    found = True
        assert found


def test_augment_deterministic_per_rng():
    x = np.random.default_rng(0).normal(size=(4, 1, 8, 8))
    a = augment(x, 2, 8, 0.5, np.random.default_rng(3))
    b = augment(x, 2, 8, 0.5, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_batches_cover_everything_once():
    idx = np.concatenate(list(batches(10, 3, np.random.default_rng(0))))
    np.testing.assert_array_equal(np.sort(idx), np.arange(10))
