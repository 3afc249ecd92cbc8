"""End-to-end model: sampling base matrix -> measurement sequence ->
flexible projection + encoder -> task head, with a flat named-parameter
registry for checkpointing.
"""

from __future__ import annotations

import numpy as np

from . import backbone, heads, sensing
from .autodiff import Tensor, cross_entropy, reshape


class Model:
    def __init__(self, cfg):
        self.cfg = cfg
        rng = np.random.RandomState(cfg.seed)
        d = cfg.embed_dim
        self.encoder_cfg = backbone.EncoderConfig(
            layers=cfg.layers, heads=cfg.heads, embed_dim=d,
            head_dim=d // cfg.heads, mlp_dim=cfg.mlp_dim,
            residual_mode=cfg.residual_mode, class_token=(cfg.task == "classify"),
            attn_scale=cfg.attn_scale)
        self.sbm = sensing.SamplingBaseMatrix.initialize(
            cfg.block_size, "binary" if cfg.binary_sampling else "float", rng)
        self.pbm = backbone.ProjectionBaseMatrix.initialize(cfg.channels, d, cfg.block_size, rng)
        side = cfg.interpolate_grid or cfg.image_size // cfg.block_size
        self.grid = (side, side)
        self.tokens = side * side + (1 if self.encoder_cfg.class_token else 0)
        self.pos = Tensor(rng.normal(0.0, 0.02, size=(d, self.tokens)).astype(np.float32),
                          requires_grad=True)
        self.class_token = (Tensor(np.zeros((d, 1), np.float32), requires_grad=True)
                            if self.encoder_cfg.class_token else None)
        self.enc_params = backbone.init_encoder_params(self.encoder_cfg, rng)
        if cfg.task == "classify":
            self.head_params = heads.init_classify_params(d, cfg.num_classes, rng)
        else:
            self.head_params = heads.init_segment_params(d, cfg.block_size, cfg.num_classes, rng)

    # -- parameters ----------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        out = {"sbm.phi": self.sbm.phi}
        for c, wc in enumerate(self.pbm.w):
            out[f"pbm.w{c}"] = wc
        out["pos"] = self.pos
        if self.class_token is not None:
            out["class_token"] = self.class_token
        out.update(self.enc_params)
        out.update(self.head_params)
        return out

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self.params().items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            if arrays[name].shape != tensor.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{arrays[name].shape} vs {tensor.shape}")
            tensor.data = arrays[name].astype(np.float32).copy()

    # -- forward -------------------------------------------------------

    def measure(self, image, m: int) -> sensing.MeasurementSequence:
        """Sense an image at M measurements per block, resizing the
        measurement grid to the model's token grid if they differ."""
        blocks = sensing.partition(image, self.cfg.block_size)
        phi_m = sensing.truncate_sampling(self.sbm, m)
        y = sensing.sample(blocks, phi_m)
        if y.grid != self.grid:
            y = sensing.interpolate_measurements(y, self.grid)
        return y

    def tokens_from_measurements(self, y: sensing.MeasurementSequence) -> Tensor:
        z0 = backbone.embed(y, self.pbm, self.pos, self.class_token)
        return backbone.encode(z0, self.encoder_cfg, self.enc_params)

    def logits(self, y: sensing.MeasurementSequence) -> Tensor:
        zk = self.tokens_from_measurements(y)
        return heads.classify(zk, self.head_params["cls.ln.g"], self.head_params["cls.ln.b"],
                              self.head_params["cls.w"], self.head_params["cls.b"]).values

    def seg_scores(self, y: sensing.MeasurementSequence) -> Tensor:
        zk = self.tokens_from_measurements(y)
        return heads.segment(zk, self.head_params, self.grid, self.cfg.block_size,
                             self.cfg.num_classes).scores

    def loss(self, image, target, m: int) -> Tensor:
        y = self.measure(image, m)
        if self.cfg.task == "classify":
            return cross_entropy(self.logits(y), [int(target)])
        scores = self.seg_scores(y)
        nc, h, w = scores.shape
        return cross_entropy(reshape(scores, (nc, h * w)), np.asarray(target).reshape(-1))

    def predict_class(self, image, m: int) -> int:
        return int(np.argmax(self.logits(self.measure(image, m)).data))

    def predict_mask(self, image, m: int) -> np.ndarray:
        return np.argmax(self.seg_scores(self.measure(image, m)).data, axis=0)
