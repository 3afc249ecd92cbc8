"""Measurement-domain transformer backbone: flexible linear projection of
variable-length measurement vectors into fixed-width tokens, learnable
position embeddings, optional class token, and an encoder stack.

The projection base matrix mirrors the sampling base matrix: the
projection for M measurements is its first M columns, so embeddings for
nested ratios differ only by the extra columns' contribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Tensor, add, concat, gelu, layer_norm, matmul, scale,
                       softmax_columns, take, transpose)
from .sensing import MeasurementSequence


@dataclass
class EncoderConfig:
    layers: int
    heads: int
    embed_dim: int
    head_dim: int
    mlp_dim: int
    residual_mode: str = "standard"   # "standard" adds the MSA residual; "literal" omits it
    class_token: bool = True
    attn_scale: str = "embed"         # divide scores by sqrt(embed_dim) or sqrt(head_dim)

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("encoder needs at least one layer")
        if self.heads * self.head_dim != self.embed_dim:
            raise ValueError(
                f"heads * head_dim must equal embed_dim "
                f"({self.heads} * {self.head_dim} != {self.embed_dim})")
        if self.residual_mode not in ("standard", "literal"):
            raise ValueError(f"unknown residual mode {self.residual_mode!r}")
        if self.attn_scale not in ("embed", "head"):
            raise ValueError(f"unknown attention scale {self.attn_scale!r}")

    @property
    def scale_dim(self) -> int:
        return self.embed_dim if self.attn_scale == "embed" else self.head_dim


@dataclass
class ProjectionBaseMatrix:
    """Per-channel learnable d x B^2 bases sharing one embed dim."""

    w: list[Tensor] = field(default_factory=list)
    embed_dim: int = 0

    def __post_init__(self):
        for wc in self.w:
            if wc.shape != self.w[0].shape or wc.shape[0] != self.embed_dim:
                raise ValueError("projection bases must share d and B^2")

    @property
    def channels(self) -> int:
        return len(self.w)

    @staticmethod
    def initialize(channels: int, embed_dim: int, block_size: int,
                   rng: np.random.RandomState | None = None):
        rng = rng or np.random.RandomState(0)
        b2 = block_size**2
        w = [Tensor(rng.normal(0.0, 1.0 / math.sqrt(b2), size=(embed_dim, b2)).astype(np.float32),
                    requires_grad=True) for _ in range(channels)]
        return ProjectionBaseMatrix(w, embed_dim)


def truncate_projection(base: ProjectionBaseMatrix, m: int) -> list[Tensor]:
    """First m columns of each per-channel base."""
    b2 = base.w[0].shape[1]
    if not 1 <= m <= b2:
        raise ValueError(f"measurement count {m} outside [1, {b2}]")
    return [take(wc, (slice(None), slice(0, m))) for wc in base.w]


def embed(y: MeasurementSequence, base: ProjectionBaseMatrix, pos: Tensor,
          class_token: Tensor | None = None) -> Tensor:
    """Z0 = sum_c W_c[:, :M] Y_c + P, with the class token prepended first."""
    if y.channels != base.channels:
        raise ValueError(f"{y.channels} measurement channels vs {base.channels} projection bases")
    w_m = truncate_projection(base, y.m)
    q = matmul(w_m[0], y.channel(0))
    for c in range(1, y.channels):
        q = add(q, matmul(w_m[c], y.channel(c)))
    t = y.length + (1 if class_token is not None else 0)
    if pos.shape != (base.embed_dim, t):
        raise ValueError(f"position embedding shape {pos.shape} != {(base.embed_dim, t)}")
    if class_token is not None:
        q = concat([class_token, q], axis=1)
    return add(q, pos)


def attention_head(z: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, scale_dim: int) -> Tensor:
    """(W_V Z) softmax_cols((W_Q Z)^T (W_K Z) / sqrt(scale_dim))."""
    q, k, v = matmul(wq, z), matmul(wk, z), matmul(wv, z)
    scores = scale(matmul(transpose(q), k), 1.0 / math.sqrt(scale_dim))
    return matmul(v, softmax_columns(scores))


def msa(z: Tensor, head_triplets, out_proj: Tensor, scale_dim: int) -> Tensor:
    """Concatenate head outputs along features, then project back to d."""
    outs = [attention_head(z, wq, wk, wv, scale_dim) for wq, wk, wv in head_triplets]
    return matmul(out_proj, concat(outs, axis=0) if len(outs) > 1 else outs[0])


def _mlp(x: Tensor, p: dict, prefix: str) -> Tensor:
    h = gelu(add(matmul(p[f"{prefix}.mlp.w1"], x), p[f"{prefix}.mlp.b1"]))
    return add(matmul(p[f"{prefix}.mlp.w2"], h), p[f"{prefix}.mlp.b2"])


def transformer_layer(z: Tensor, params: dict, cfg: EncoderConfig, layer: int) -> Tensor:
    pre = f"enc{layer}"
    triplets = [(params[f"{pre}.h{i}.wq"], params[f"{pre}.h{i}.wk"], params[f"{pre}.h{i}.wv"])
                for i in range(cfg.heads)]
    attended = msa(layer_norm(z, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"]),
                   triplets, params[f"{pre}.proj"], cfg.scale_dim)
    zt = add(attended, z) if cfg.residual_mode == "standard" else attended
    return add(_mlp(layer_norm(zt, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"]), params, pre), zt)


def encode(z0: Tensor, cfg: EncoderConfig, params: dict, layers: int | None = None) -> Tensor:
    """Apply the encoder stack; ``layers`` overrides cfg.layers (0 = identity)."""
    z = z0
    for l in range(cfg.layers if layers is None else layers):
        z = transformer_layer(z, params, cfg, l)
    return z


def init_encoder_params(cfg: EncoderConfig, rng: np.random.RandomState | None = None) -> dict:
    """Fan-in scaled Gaussian weights, unit gains, zero biases."""
    rng = rng or np.random.RandomState(0)
    d, dp = cfg.embed_dim, cfg.head_dim

    def w(*shape):
        std = 1.0 / math.sqrt(shape[-1])
        return Tensor(rng.normal(0.0, std, size=shape).astype(np.float32), requires_grad=True)

    params: dict[str, Tensor] = {}
    for l in range(cfg.layers):
        pre = f"enc{l}"
        params[f"{pre}.ln1.g"] = Tensor(np.ones(d, np.float32), requires_grad=True)
        params[f"{pre}.ln1.b"] = Tensor(np.zeros(d, np.float32), requires_grad=True)
        for i in range(cfg.heads):
            for name in ("wq", "wk", "wv"):
                params[f"{pre}.h{i}.{name}"] = w(dp, d)
        params[f"{pre}.proj"] = w(d, d)
        params[f"{pre}.ln2.g"] = Tensor(np.ones(d, np.float32), requires_grad=True)
        params[f"{pre}.ln2.b"] = Tensor(np.zeros(d, np.float32), requires_grad=True)
        params[f"{pre}.mlp.w1"] = w(cfg.mlp_dim, d)
        params[f"{pre}.mlp.b1"] = Tensor(np.zeros((cfg.mlp_dim, 1), np.float32), requires_grad=True)
        params[f"{pre}.mlp.w2"] = w(d, cfg.mlp_dim)
        params[f"{pre}.mlp.b2"] = Tensor(np.zeros((d, 1), np.float32), requires_grad=True)
    return params
