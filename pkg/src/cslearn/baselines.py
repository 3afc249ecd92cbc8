"""Comparison methods: bicubic down/up resampling at a matched data
budget, rank-k SVD compression with exact ratio accounting, and a
minimum-norm least-squares probe that reconstructs images from
measurements given a (true or guessed) sampling matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import interp
from .sensing import BlockSequence, MeasurementSequence, assemble
from .autodiff import Tensor


def psnr(reference: np.ndarray, estimate: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((reference.astype(np.float64) - estimate.astype(np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * math.log10(peak**2 / mse)


def bicubic_down_up(image: np.ndarray, ratio: float) -> np.ndarray:
    """Bicubic (Catmull-Rom) downsample to area fraction ``ratio``, then
    bilinear upsample back to the original size."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    c, h, w = image.shape
    nh, nw = int(math.sqrt(ratio) * h), int(math.sqrt(ratio) * w)
    if nh < 1 or nw < 1:
        raise ValueError(f"ratio {ratio} shrinks {h}x{w} below one pixel")
    down = interp.grid_matrix((nh, nw), (h, w), kind="cubic")
    up = interp.grid_matrix((h, w), (nh, nw), kind="linear")
    flat = image.reshape(c, h * w).astype(np.float64)
    return (flat @ down.T @ up.T).reshape(c, h, w).astype(image.dtype)


@dataclass
class SvdCompression:
    u_k: np.ndarray   # w x k
    s_k: np.ndarray   # k x k diagonal
    v_k: np.ndarray   # k x h
    ratio: float

    def rebuild(self) -> np.ndarray:
        return (self.u_k @ self.s_k @ self.v_k).astype(np.float32)


def svd_ratio(w: int, h: int, k: int) -> float:
    return (w * k + h * k + k) / (w * h)


def svd_compress(channel: np.ndarray, k: int) -> SvdCompression:
    """Top-k singular triplets of a w x h image channel."""
    w, h = channel.shape
    if not 1 <= k <= min(w, h):
        raise ValueError(f"rank {k} outside [1, {min(w, h)}]")
    u, s, vt = np.linalg.svd(channel.astype(np.float64), full_matrices=False)
    return SvdCompression(u[:, :k], np.diag(s[:k]), vt[:k, :], svd_ratio(w, h, k))


def least_squares_probe(y: MeasurementSequence, phi_guess: np.ndarray,
                        reference: np.ndarray | None = None):
    """Minimum-norm block reconstruction x = Phi^T (Phi Phi^T)^-1 y.

    Returns (image, psnr_vs_reference_or_None). Rank-deficient guesses
    fall back to a ridge-regularized solve with a warning.
    """
    phi = np.asarray(phi_guess, dtype=np.float64)
    m, b2 = phi.shape
    gram = phi @ phi.T
    if np.linalg.matrix_rank(gram) < m:
        warnings.warn("sampling matrix guess is rank deficient; using ridge 1e-6")
        gram = gram + 1e-6 * np.eye(m)
    pinv_rows = np.linalg.solve(gram, phi)  # (Phi Phi^T)^-1 Phi, shape m x B^2
    blocks = np.empty((y.channels, b2, y.length), dtype=np.float32)
    for c in range(y.channels):
        blocks[c] = (pinv_rows.T @ y.y.data[c].astype(np.float64)).astype(np.float32)
    image = assemble(BlockSequence(Tensor(blocks), y.grid, y.channels), y.block_size).data
    score = None if reference is None else psnr(reference, image)
    return image, score
