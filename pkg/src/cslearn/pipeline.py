"""Configuration, training loop (fixed- and arbitrary-ratio), evaluation
metrics, and checkpointing.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import containers, sensing
from .autodiff import SgdState
from .data import load_cifar10, load_mnist, synth_seg
from .model import Model


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "classify"             # classify | segment
    dataset_kind: str = "mnist-idx"    # mnist-idx | cifar10-bin | synth-seg
    dataset_path: str = ""
    block_size: int = 4
    channels: int = 1
    image_size: int = 32
    num_classes: int = 10
    layers: int = 4
    heads: int = 4
    embed_dim: int = 64
    mlp_dim: int = 128
    residual_mode: str = "standard"
    attn_scale: str = "embed"
    binary_sampling: bool = False
    ratio_mode: str = "fixed:8"        # fixed:M | arbitrary
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 5
    batch_size: int = 32
    schedule: str = "constant"         # constant | polynomial:POWER
    seed: int = 0
    limit_train: int = 0               # 0 = use everything
    limit_test: int = 0
    interpolate_grid: int = 0          # nonzero: bilinear-resize measurement grid to this side
    flip: bool = False                 # horizontal flip augmentation (segmentation)

    def __post_init__(self):
        if self.task not in ("classify", "segment"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.ratio_mode != "arbitrary" and not self.ratio_mode.startswith("fixed:"):
            raise ConfigError(f"ratio_mode must be 'arbitrary' or 'fixed:M', got {self.ratio_mode!r}")
        if self.ratio_mode.startswith("fixed:"):
            m = self.fixed_m
            if not 1 <= m <= self.block_size**2:
                raise ConfigError(f"fixed M={m} outside [1, {self.block_size**2}]")
        if self.schedule != "constant" and not self.schedule.startswith("polynomial:"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        for name in ("lr", "epochs", "batch_size", "block_size", "embed_dim"):
            if getattr(self, name) < 0 or (name != "lr" and getattr(self, name) == 0):
                raise ConfigError(f"{name} must be positive")

    @property
    def fixed_m(self) -> int:
        return int(self.ratio_mode.split(":", 1)[1])

    @property
    def arbitrary(self) -> bool:
        return self.ratio_mode == "arbitrary"


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def config_to_text(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, overrides: dict | None = None) -> TrainConfig:
    """Flat ``key = value`` UTF-8 text; unknown keys are errors."""
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        values[key.strip()] = raw.strip()
    for key, raw in (overrides or {}).items():
        values[str(key)] = str(raw)
    kwargs = {}
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = fields[key].type
        try:
            if ftype == "bool":
                kwargs[key] = _BOOL[raw.lower()]
            elif ftype == "int":
                kwargs[key] = int(raw)
            elif ftype == "float":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from e
    return TrainConfig(**kwargs)


# -- data --------------------------------------------------------------


def load_dataset(cfg: TrainConfig, split: str):
    limit = cfg.limit_train if split == "train" else cfg.limit_test
    if cfg.dataset_kind == "mnist-idx":
        ds = load_mnist(cfg.dataset_path, split)
    elif cfg.dataset_kind == "cifar10-bin":
        ds = load_cifar10(cfg.dataset_path, split)
    elif cfg.dataset_kind == "synth-seg":
        count = limit or (256 if split == "train" else 64)
        return synth_seg(count, cfg.image_size, cfg.num_classes,
                         cfg.seed + (0 if split == "train" else 1))
    else:
        raise ConfigError(f"unknown dataset kind {cfg.dataset_kind!r}")
    if limit:
        ds.images, ds.labels = ds.images[:limit], ds.labels[:limit]
    return ds


# -- metrics -----------------------------------------------------------

METRICS_HEADER = ["epoch", "split", "metric", "value", "m"]


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        w.writerows(rows)


def accuracy(model: Model, data, m: int, threads: int = 1) -> float:
    def predict(i):
        return model.predict_class(data.images[i], m) == data.labels[i]

    n = len(data)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            hits = sum(pool.map(predict, range(n)))
    else:
        hits = sum(predict(i) for i in range(n))
    return hits / n


def miou_and_pixel_acc(model: Model, data, m: int) -> tuple[float, float]:
    inter = np.zeros(model.cfg.num_classes, np.int64)
    union = np.zeros(model.cfg.num_classes, np.int64)
    correct = total = 0
    for i in range(len(data)):
        pred = model.predict_mask(data.images[i], m)
        mask = data.masks[i]
        correct += int((pred == mask).sum())
        total += mask.size
        for c in range(model.cfg.num_classes):
            p, t = pred == c, mask == c
            inter[c] += int((p & t).sum())
            union[c] += int((p | t).sum())
    present = union > 0
    miou = float(np.mean(inter[present] / union[present])) if present.any() else 0.0
    return miou, correct / total


def evaluate(model: Model, data, m: int, threads: int = 1) -> dict[str, float]:
    if model.cfg.task == "classify":
        return {"accuracy": accuracy(model, data, m, threads)}
    miou, acc = miou_and_pixel_acc(model, data, m)
    return {"miou": miou, "pixel_accuracy": acc}


def sweep(model: Model, data, threads: int = 1) -> list[tuple[int, float]]:
    """Primary metric at every M in {1 .. B^2}."""
    key = "accuracy" if model.cfg.task == "classify" else "miou"
    return [(m, evaluate(model, data, m, threads)[key])
            for m in range(1, model.cfg.block_size**2 + 1)]


# -- training ----------------------------------------------------------


def _lr_at(cfg: TrainConfig, step: int, total: int) -> float:
    if cfg.schedule == "constant":
        return cfg.lr
    power = float(cfg.schedule.split(":", 1)[1])
    return cfg.lr * (1.0 - step / max(total, 1)) ** power


def train(cfg: TrainConfig, train_data=None, test_data=None, log=None):
    """Jointly optimize sampling, projection, encoder, and head.

    Returns (model, metric rows). Deterministic given (cfg, data).
    """
    train_data = train_data if train_data is not None else load_dataset(cfg, "train")
    test_data = test_data if test_data is not None else load_dataset(cfg, "test")
    model = Model(cfg)
    params = model.params()
    opt = SgdState(params.values(), cfg.lr, cfg.momentum, cfg.weight_decay)
    order_rng = np.random.RandomState(cfg.seed + 1)
    ratio_rng = np.random.RandomState(cfg.seed + 2)
    flip_rng = np.random.RandomState(cfg.seed + 3)
    b2 = cfg.block_size**2
    n = len(train_data)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = steps_per_epoch * cfg.epochs
    rows, step = [], 0
    segmentation = cfg.task == "segment"
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            m = int(ratio_rng.randint(1, b2 + 1)) if cfg.arbitrary else cfg.fixed_m
            opt.zero_grad()
            batch_loss = 0.0
            for i in batch:
                image = train_data.images[i]
                target = train_data.masks[i] if segmentation else train_data.labels[i]
                if segmentation and cfg.flip and flip_rng.rand() < 0.5:
                    image = image[:, :, ::-1].copy()
                    target = target[:, ::-1].copy()
                loss = model.loss(image, target, m)
                loss.backward()
                batch_loss += float(loss.data)
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}, step {step}")
            inv = np.float32(1.0 / len(batch))
            for p in params.values():
                if p.grad is not None:
                    p.grad = p.grad * inv
            opt.lr = _lr_at(cfg, step, total_steps)
            opt.step()
            epoch_loss += batch_loss
            step += 1
        eval_m = b2 if cfg.arbitrary else cfg.fixed_m
        metrics = evaluate(model, test_data, eval_m)
        rows.append((epoch, "train", "loss", f"{epoch_loss / steps_per_epoch:.6f}",
                     0 if cfg.arbitrary else cfg.fixed_m))
        for name, value in metrics.items():
            rows.append((epoch, "test", name, f"{value:.6f}", eval_m))
        if log:
            log(f"epoch {epoch}: loss {epoch_loss / steps_per_epoch:.4f} "
                + " ".join(f"{k} {v:.4f}" for k, v in metrics.items()))
    return model, rows


# -- checkpointing -----------------------------------------------------


def save_checkpoint(path, model: Model) -> None:
    tensors = {name: t.data for name, t in model.params().items()}
    tensors["__config__"] = containers.pack_text(config_to_text(model.cfg))
    tensors["__digest__"] = containers.pack_u64(
        sensing.matrix_digest(model.sbm.effective().data))
    containers.save_tensors(path, tensors)


def load_checkpoint(path) -> Model:
    arrays = containers.load_tensors(path)
    if "__config__" not in arrays:
        raise containers.FormatError("checkpoint has no config echo")
    cfg = parse_config(containers.unpack_text(arrays.pop("__config__")))
    stored_digest = containers.unpack_u64(arrays.pop("__digest__"))
    model = Model(cfg)
    model.load_param_arrays(arrays)
    actual = sensing.matrix_digest(model.sbm.effective().data)
    if actual != stored_digest:
        raise containers.FormatError(
            f"sampling matrix digest mismatch: stored {stored_digest:#x}, actual {actual:#x}")
    return model
