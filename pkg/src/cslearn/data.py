"""Dataset ingestion: MNIST-format IDX files, CIFAR-10 binary batches,
and a seeded synthetic segmentation set. All images come out as float32
C x H x W arrays in [0, 1].
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    pass


@dataclass
class DatasetSpec:
    kind: str                      # mnist-idx | cifar10-bin | synth-seg
    path: str = ""
    split: str = "train"
    normalization: tuple | None = None   # (mean, std) per channel


@dataclass
class LabeledImages:
    images: np.ndarray   # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray   # (N,) int64

    def __len__(self):
        return len(self.labels)


@dataclass
class SegmentationPairs:
    images: np.ndarray   # (N, C, H, W) float32
    masks: np.ndarray    # (N, H, W) int64

    def __len__(self):
        return len(self.images)


# -- IDX ---------------------------------------------------------------


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header at offset {len(raw)}")
    magic, n, h, w = struct.unpack_from(">IIII", raw, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{path}: bad magic {magic:#010x} at offset 0")
    if len(raw) != 16 + n * h * w:
        raise FormatError(f"{path}: truncated payload at offset {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header at offset {len(raw)}")
    magic, n = struct.unpack_from(">II", raw, 0)
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic:#010x} at offset 0")
    if len(raw) != 8 + n:
        raise FormatError(f"{path}: truncated payload at offset {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(np.ascontiguousarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


def load_mnist(path, split: str) -> LabeledImages:
    """IDX image/label pair; 28x28 inputs are zero-padded (centered) to
    32x32 so block sizes 4, 8, 16 divide evenly."""
    prefix = "train" if split == "train" else "t10k"
    images = read_idx_images(os.path.join(path, f"{prefix}-images-idx3-ubyte"))
    labels = read_idx_labels(os.path.join(path, f"{prefix}-labels-idx1-ubyte"))
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    n, h, w = images.shape
    x = images.astype(np.float32) / 255.0
    if (h, w) == (28, 28):
        padded = np.zeros((n, 32, 32), np.float32)
        padded[:, 2:30, 2:30] = x
        x = padded
    return LabeledImages(x[:, None, :, :], labels)


# -- CIFAR-10 ----------------------------------------------------------

_CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 pixels, channel-major


def _read_cifar_file(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % _CIFAR_RECORD:
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of {_CIFAR_RECORD}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    images = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return images, labels


def load_cifar10(path, split: str) -> LabeledImages:
    files = ([f"data_batch_{i}" for i in range(1, 6)] if split == "train" else ["test_batch"])
    parts = [_read_cifar_file(os.path.join(path, name)) for name in files]
    return LabeledImages(np.concatenate([p[0] for p in parts]),
                         np.concatenate([p[1] for p in parts]))


# -- synthetic segmentation --------------------------------------------


def synth_seg(count: int, size: int, classes: int, seed: int) -> SegmentationPairs:
    """Seeded rectangles/ellipses on a textured background with exact
    per-pixel class masks. Class 0 is background; every image contains
    at least one foreground object."""
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.RandomState(seed)
    images = np.empty((count, 1, size, size), np.float32)
    masks = np.zeros((count, size, size), np.int64)
    yy, xx = np.mgrid[0:size, 0:size]
    for i in range(count):
        gx, gy = rng.uniform(-0.3, 0.3, 2)
        background = 0.35 + gx * (xx / size) + gy * (yy / size) + rng.normal(0, 0.04, (size, size))
        img = background
        mask = np.zeros((size, size), np.int64)
        for _ in range(rng.randint(1, 4)):
            cls = rng.randint(1, classes)
            shade = 0.75 + 0.2 * rng.rand()
            cx, cy = rng.randint(size // 5, 4 * size // 5, 2)
            rx, ry = rng.randint(size // 8, size // 3, 2)
            if rng.rand() < 0.5:
                region = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
            else:
                region = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
            img = np.where(region, shade + rng.normal(0, 0.02, (size, size)), img)
            mask[region] = cls
        if not mask.any():  # guarantee a foreground object
            mask[size // 4:size // 2, size // 4:size // 2] = 1
            img[size // 4:size // 2, size // 4:size // 2] = 0.85
        images[i, 0] = np.clip(img, 0.0, 1.0)
        masks[i] = mask
    return SegmentationPairs(images, masks)
