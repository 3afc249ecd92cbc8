"""Task heads: classification from the class token, and progressive
bilinear-upsampling segmentation back to full image resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import interp
from .autodiff import Tensor, add, as_tensor, layer_norm, matmul, relu, reshape, take


@dataclass
class Logits:
    values: Tensor  # (num_classes,) column


@dataclass
class SegmentationMap:
    scores: Tensor  # (num_classes, H, W)


def classify(zk: Tensor, ln_gain: Tensor, ln_bias: Tensor, linear: Tensor,
             bias: Tensor | None = None, class_token_present: bool = True) -> Logits:
    """logits = linear . LN(Z^K[:, 0]); the class token is token 0."""
    if not class_token_present:
        raise ValueError("classify needs a class token at sequence index 0")
    token = take(zk, (slice(None), slice(0, 1)))
    logits = matmul(linear, layer_norm(token, ln_gain, ln_bias))
    if bias is not None:
        logits = add(logits, bias)
    return Logits(logits)


def channel_norm(f: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Per-channel zero-mean unit-variance over spatial positions, then affine.

    f is c x n. Stands in for batch normalization on a single device.
    """
    f, gain, bias = as_tensor(f), as_tensor(gain), as_tensor(bias)
    c = f.shape[0]
    x = f.data.astype(np.float64)
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(f.dtype)
    gcol = gain.data.reshape(c, 1)
    out = Tensor(gcol * xhat + bias.data.reshape(c, 1), _parents=(f, gain, bias))

    def bwd(g):
        if gain.requires_grad:
            gain._accum((g * xhat).sum(axis=1, dtype=np.float64).astype(gain.dtype).reshape(gain.shape))
        if bias.requires_grad:
            bias._accum(g.sum(axis=1, dtype=np.float64).astype(bias.dtype).reshape(bias.shape))
        if f.requires_grad:
            gh = (g * gcol).astype(np.float64)
            m1 = gh.mean(axis=1, keepdims=True)
            m2 = (gh * xhat).mean(axis=1, keepdims=True)
            f._accum((inv * (gh - m1 - xhat * m2)).astype(f.dtype))

    out._backward = bwd
    return out


_upsample_cache: dict[tuple[int, int], Tensor] = {}


def _upsample2x_matrix(h: int, w: int) -> Tensor:
    key = (h, w)
    if key not in _upsample_cache:
        r = interp.grid_matrix((2 * h, 2 * w), (h, w), kind="linear")
        _upsample_cache[key] = Tensor(r.T.astype(np.float32))
    return _upsample_cache[key]


def bilinear_upsample2x(f: Tensor) -> Tensor:
    """Factor-2 bilinear upsampling with half-pixel centers; f is c x h x w."""
    f = as_tensor(f)
    c, h, w = f.shape
    flat = reshape(f, (c, h * w))
    out = matmul(flat, _upsample2x_matrix(h, w))
    return reshape(out, (c, 2 * h, 2 * w))


def stage_widths(embed_dim: int, block_size: int, num_classes: int) -> list[int]:
    """Channel width after each of the log2(B) stages, halving with a floor."""
    n = int(math.log2(block_size))
    return [max(embed_dim >> (s + 1), num_classes) for s in range(n)]


def segment(zk: Tensor, params: dict, grid, block_size: int, num_classes: int) -> SegmentationMap:
    """log2(B) stages of (1x1 conv, channel norm, ReLU, 2x bilinear upsample),
    then a final 1x1 projection to class scores at full resolution."""
    if block_size < 1 or block_size & (block_size - 1):
        raise ValueError(f"segmentation head needs a power-of-two block size, got {block_size}")
    gh, gw = grid
    if zk.shape[1] != gh * gw:
        raise ValueError(f"token count {zk.shape[1]} != grid {gh}x{gw}")
    f = zk
    h, w = gh, gw
    for s in range(int(math.log2(block_size))):
        f = add(matmul(params[f"seg{s}.w"], f), params[f"seg{s}.b"])
        f = relu(channel_norm(f, params[f"seg{s}.norm.g"], params[f"seg{s}.norm.b"]))
        f = reshape(bilinear_upsample2x(reshape(f, (f.shape[0], h, w))), (f.shape[0], 4 * h * w))
        h, w = 2 * h, 2 * w
    scores = add(matmul(params["seg.final.w"], f), params["seg.final.b"])
    return SegmentationMap(reshape(scores, (num_classes, h, w)))


def init_classify_params(embed_dim: int, num_classes: int,
                         rng: np.random.RandomState | None = None) -> dict:
    rng = rng or np.random.RandomState(0)
    return {
        "cls.ln.g": Tensor(np.ones(embed_dim, np.float32), requires_grad=True),
        "cls.ln.b": Tensor(np.zeros(embed_dim, np.float32), requires_grad=True),
        "cls.w": Tensor(rng.normal(0.0, 0.02, size=(num_classes, embed_dim)).astype(np.float32),
                        requires_grad=True),
        "cls.b": Tensor(np.zeros((num_classes, 1), np.float32), requires_grad=True),
    }


def init_segment_params(embed_dim: int, block_size: int, num_classes: int,
                        rng: np.random.RandomState | None = None) -> dict:
    rng = rng or np.random.RandomState(0)
    params: dict[str, Tensor] = {}
    widths = stage_widths(embed_dim, block_size, num_classes)
    c_in = embed_dim
    for s, c_out in enumerate(widths):
        params[f"seg{s}.w"] = Tensor(
            rng.normal(0.0, math.sqrt(2.0 / c_in), size=(c_out, c_in)).astype(np.float32),
            requires_grad=True)
        params[f"seg{s}.b"] = Tensor(np.zeros((c_out, 1), np.float32), requires_grad=True)
        params[f"seg{s}.norm.g"] = Tensor(np.ones(c_out, np.float32), requires_grad=True)
        params[f"seg{s}.norm.b"] = Tensor(np.zeros(c_out, np.float32), requires_grad=True)
        c_in = c_out
    params["seg.final.w"] = Tensor(
        rng.normal(0.0, math.sqrt(2.0 / c_in), size=(num_classes, c_in)).astype(np.float32),
        requires_grad=True)
    params["seg.final.b"] = Tensor(np.zeros((num_classes, 1), np.float32), requires_grad=True)
    return params
