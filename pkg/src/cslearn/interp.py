"""Separable resampling matrices (bilinear and Catmull-Rom bicubic).

Resizing a raster is linear in its pixels, so every resize here is
expressed as a dense operator built from 1-D interpolation matrices;
2-D operators are Kronecker products in row-major order. Half-pixel
centers throughout: out index i maps to source coordinate
(i + 0.5) * n_in / n_out - 0.5, edges clamped.
"""

from __future__ import annotations

import numpy as np


def linear_matrix_1d(n_out: int, n_in: int) -> np.ndarray:
    """(n_out, n_in) bilinear interpolation matrix, half-pixel centers."""
    r = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        i0 = int(np.floor(src))
        w = src - i0
        r[i, min(max(i0, 0), n_in - 1)] += 1.0 - w
        r[i, min(max(i0 + 1, 0), n_in - 1)] += w
    return r


def _cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic kernel; a=-0.5 is Catmull-Rom."""
    t = np.abs(t)
    out = np.zeros_like(t)
    m1 = t <= 1
    m2 = (t > 1) & (t < 2)
    out[m1] = (a + 2) * t[m1] ** 3 - (a + 3) * t[m1] ** 2 + 1
    out[m2] = a * t[m2] ** 3 - 5 * a * t[m2] ** 2 + 8 * a * t[m2] - 4 * a
    return out


def cubic_matrix_1d(n_out: int, n_in: int, a: float = -0.5) -> np.ndarray:
    """(n_out, n_in) bicubic interpolation matrix, half-pixel centers."""
    r = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        i0 = int(np.floor(src))
        taps = np.arange(i0 - 1, i0 + 3)
        w = _cubic_kernel(src - taps, a)
        w = w / w.sum()
        for tap, wt in zip(taps, w):
            r[i, min(max(tap, 0), n_in - 1)] += wt
    return r


def grid_matrix(new_hw, old_hw, kind: str = "linear", a: float = -0.5) -> np.ndarray:
    """(h'*w', h*w) operator resizing a row-major raster grid."""
    make = linear_matrix_1d if kind == "linear" else lambda o, i: cubic_matrix_1d(o, i, a)
    rh = make(new_hw[0], old_hw[0])
    rw = make(new_hw[1], old_hw[1])
    return np.kron(rh, rw)
