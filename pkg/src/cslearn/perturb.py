"""Evaluation-time perturbations: measurement-domain Gaussian noise,
random packet drop of measurement columns, and patch shuffling of the
input image. All randomness comes from a splitmix64 generator so results
are bit-reproducible across platforms.

These are applied at evaluation only; the training loop never imports
this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .sensing import BlockSequence, MeasurementSequence, sample

_MASK = 0xFFFFFFFFFFFFFFFF


class SplitMix64:
    """Deterministic 64-bit PRNG (splitmix64)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """53-bit uniform in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Box-Muller; draws two uniforms per call."""
        u1 = max(self.uniform(), 1e-300)
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def permutation(self, n: int) -> np.ndarray:
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choose(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), uniform, order-free."""
        return np.sort(self.permutation(n)[:k])


@dataclass
class PerturbSpec:
    kind: str                 # noise | drop | shuffle
    sigma: float = 0.0        # noise std on the 0-255 pixel scale
    p: float = 0.0            # drop fraction
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("noise", "drop", "shuffle"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("drop fraction must be in [0, 1]")


def add_measurement_noise(x: BlockSequence, phi_m: Tensor, sigma: float,
                          seed: int) -> MeasurementSequence:
    """y_i = Phi x_i + Phi n with n ~ N(0, sigma^2) i.i.d. per pixel.

    Equals sampling the noisy image directly, by linearity. ``sigma`` is
    on the 0-255 scale; pixel data lives in [0, 1].
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return sample(x, phi_m)
    rng = SplitMix64(seed)
    noise = rng.normals(x.blocks.data.size).reshape(x.blocks.shape) * (sigma / 255.0)
    noisy = BlockSequence(Tensor((x.blocks.data + noise).astype(x.blocks.dtype)),
                          x.grid, x.channels)
    return sample(noisy, phi_m)


def patch_drop(y: MeasurementSequence, p: float, seed: int) -> MeasurementSequence:
    """Zero exactly round(p*L) uniformly chosen measurement columns."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("drop fraction must be in [0, 1]")
    k = int(round(p * y.length))
    if k == 0:
        return y
    dropped = SplitMix64(seed).choose(y.length, k)
    data = y.y.data.copy()
    data[:, :, dropped] = 0.0
    return MeasurementSequence(Tensor(data), y.m, y.block_size, y.grid, y.channels,
                               y.matrix_digest)


def patch_shuffle(image: np.ndarray, block_size: int, seed: int) -> np.ndarray:
    """Uniformly permute the B x B patches of a C x H x W image,
    identically across channels."""
    c, h, w = image.shape
    b = block_size
    if h % b or w % b:
        raise ValueError(f"patch_shuffle: {h}x{w} not divisible by block size {b}")
    gh, gw = h // b, w // b
    perm = SplitMix64(seed).permutation(gh * gw)
    patches = image.reshape(c, gh, b, gw, b).transpose(0, 1, 3, 2, 4).reshape(c, gh * gw, b, b)
    patches = patches[:, perm]
    return (patches.reshape(c, gh, gw, b, b).transpose(0, 1, 3, 2, 4)
            .reshape(c, h, w).copy())


def permute_measurement_columns(y: MeasurementSequence, perm: np.ndarray) -> MeasurementSequence:
    """Post-sensing equivalent of patch_shuffle: reorder measurement columns."""
    data = y.y.data[:, :, perm].copy()
    return MeasurementSequence(Tensor(data), y.m, y.block_size, y.grid, y.channels,
                               y.matrix_digest)
