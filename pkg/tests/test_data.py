"""Dataset loaders and the named-tensor container."""

import struct

import numpy as np
import pytest

from cslearn import containers
from cslearn.data import (FormatError, load_cifar10, load_mnist,
                          read_idx_images, read_idx_labels, synth_seg,
                          write_idx_images, write_idx_labels)


# -- IDX / MNIST -------------------------------------------------------


def test_idx_round_trip(tmp_path):
    rng = np.random.RandomState(0)
    images = rng.randint(0, 256, (5, 28, 28)).astype(np.uint8)
    labels = rng.randint(0, 10, 5).astype(np.uint8)
    write_idx_images(tmp_path / "imgs", images)
    write_idx_labels(tmp_path / "labs", labels)
    assert np.array_equal(read_idx_images(tmp_path / "imgs"), images)
    assert np.array_equal(read_idx_labels(tmp_path / "labs"), labels)


def test_idx_bad_magic(tmp_path):
    (tmp_path / "bad").write_bytes(struct.pack(">IIII", 0xDEAD, 1, 2, 2) + bytes(4))
    with pytest.raises(FormatError, match="magic"):
        read_idx_images(tmp_path / "bad")


def test_idx_truncated(tmp_path):
    (tmp_path / "short").write_bytes(struct.pack(">IIII", 0x803, 2, 28, 28) + bytes(100))
    with pytest.raises(FormatError, match="truncated"):
        read_idx_images(tmp_path / "short")


def test_load_mnist_padding_and_range(digits_dir):
    ds = load_mnist(digits_dir, "test")
    assert ds.images.shape[1:] == (1, 32, 32)
    assert float(ds.images.min()) >= 0.0 and float(ds.images.max()) <= 1.0
    # zero border from the 28->32 centered padding
    assert np.all(ds.images[:, :, :2, :] == 0)
    assert np.all(ds.images[:, :, :, 30:] == 0)
    assert set(np.unique(ds.labels)) <= set(range(10))


def test_load_mnist_count_matches_header(digits_dir):
    ds = load_mnist(digits_dir, "train")
    assert len(ds) == 600


# -- CIFAR-10 ----------------------------------------------------------


def _write_cifar(path, n, seed=0):
    rng = np.random.RandomState(seed)
    rec = np.empty((n, 3073), np.uint8)
    rec[:, 0] = rng.randint(0, 10, n)
    rec[:, 1:] = rng.randint(0, 256, (n, 3072))
    path.write_bytes(rec.tobytes())
    return rec


def test_load_cifar10_shapes_and_ranges(tmp_path):
    for i in range(1, 6):
        _write_cifar(tmp_path / f"data_batch_{i}", 4, seed=i)
    _write_cifar(tmp_path / "test_batch", 3, seed=9)
    train = load_cifar10(tmp_path, "train")
    test = load_cifar10(tmp_path, "test")
    assert train.images.shape == (20, 3, 32, 32)
    assert test.images.shape == (3, 3, 32, 32)
    assert set(np.unique(train.labels)) <= set(range(10))
    assert 0.0 <= float(test.images.min()) and float(test.images.max()) <= 1.0


def test_load_cifar10_record_round_trip(tmp_path):
    rec = _write_cifar(tmp_path / "test_batch", 2, seed=4)
    ds = load_cifar10(tmp_path, "test")
    rebuilt = np.round(ds.images * 255.0).astype(np.uint8).reshape(2, 3072)
    assert np.array_equal(rebuilt, rec[:, 1:])
    assert np.array_equal(ds.labels, rec[:, 0])


def test_load_cifar10_bad_size(tmp_path):
    (tmp_path / "test_batch").write_bytes(bytes(3073 * 2 + 1))
    with pytest.raises(FormatError, match="multiple"):
        load_cifar10(tmp_path, "test")


# -- synthetic segmentation --------------------------------------------


def test_synth_seg_deterministic():
    a = synth_seg(8, 32, 3, seed=5)
    b = synth_seg(8, 32, 3, seed=5)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.masks, b.masks)


def test_synth_seg_mask_ranges_and_foreground():
    ds = synth_seg(16, 32, 4, seed=1)
    assert set(np.unique(ds.masks)) <= set(range(4))
    for i in range(len(ds)):
        assert ds.masks[i].any(), "every image must contain a foreground object"
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


def test_synth_seg_rejects_single_class():
    with pytest.raises(ValueError):
        synth_seg(1, 16, 1, seed=0)


# -- named tensor container --------------------------------------------


def test_container_round_trip_bit_identical(tmp_path):
    rng = np.random.RandomState(7)
    tensors = {
        "a": rng.randn(3, 4).astype(np.float32),
        "b.nested/name": rng.randn(5).astype(np.float32),
        "scalarish": rng.randn(1).astype(np.float32),
    }
    p1, p2 = tmp_path / "x.tclt", tmp_path / "y.tclt"
    containers.save_tensors(p1, tensors)
    back = containers.load_tensors(p1)
    assert set(back) == set(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
    containers.save_tensors(p2, back)
    assert p1.read_bytes() == p2.read_bytes()


def test_container_bad_magic(tmp_path):
    (tmp_path / "bad").write_bytes(b"XXXX" + bytes(8))
    with pytest.raises(containers.FormatError, match="magic"):
        containers.load_tensors(tmp_path / "bad")


def test_container_truncated_payload(tmp_path):
    p = tmp_path / "t.tclt"
    containers.save_tensors(p, {"w": np.ones((4, 4), np.float32)})
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(containers.FormatError, match="truncated"):
        containers.load_tensors(p)


def test_container_trailing_bytes(tmp_path):
    p = tmp_path / "t.tclt"
    containers.save_tensors(p, {"w": np.ones(2, np.float32)})
    p.write_bytes(p.read_bytes() + b"JUNK")
    with pytest.raises(containers.FormatError, match="trailing"):
        containers.load_tensors(p)


def test_container_text_and_u64_packing():
    msg = "ratio_mode = fixed:8\n"
    assert containers.unpack_text(containers.pack_text(msg)) == msg
    for v in (0, 1, 2**63 + 12345, 2**64 - 1):
        assert containers.unpack_u64(containers.pack_u64(v)) == v
