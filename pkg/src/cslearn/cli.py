"""Command-line surface: train / eval / sweep / perturb / baseline /
probe / export. Exit codes: 0 success, 2 usage or config error, 3 data
or checkpoint error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import baselines, containers, data, pipeline, sensing
from .perturb import PerturbSpec, add_measurement_noise, patch_drop, patch_shuffle
from .pipeline import ConfigError, DivergenceError, TrainConfig


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="evaluation worker threads")


def _parse_overrides(pairs):
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not KEY=VALUE")
        k, _, v = pair.partition("=")
        out[k.strip()] = v.strip()
    return out


def _load_config(args) -> TrainConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    try:
        with open(args.config, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {args.config}: {e}") from e
    overrides = _parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return pipeline.parse_config(text, overrides)


def _load_checkpoint(args):
    model = pipeline.load_checkpoint(args.checkpoint)
    overrides = _parse_overrides(args.overrides)
    if overrides:
        model.cfg = pipeline.parse_config(pipeline.config_to_text(model.cfg), overrides)
    return model


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _metric_key(model):
    return "accuracy" if model.cfg.task == "classify" else "miou"


# -- subcommands -------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    model, rows = pipeline.train(cfg, log=print)
    pipeline.save_checkpoint(os.path.join(args.out, "checkpoint.tclt"), model)
    pipeline.write_metrics_csv(os.path.join(args.out, "metrics.csv"), rows)
    final = [r for r in rows if r[1] == "test"]
    print("final " + " ".join(f"{r[2]}={r[3]}" for r in final if r[0] == rows[-1][0]))
    return 0


def cmd_eval(args) -> int:
    model = _load_checkpoint(args)
    test = pipeline.load_dataset(model.cfg, "test")
    m = args.m or (model.cfg.block_size**2 if model.cfg.arbitrary else model.cfg.fixed_m)
    metrics = pipeline.evaluate(model, test, m, args.threads)
    print(" ".join(f"{k}={v:.6f}" for k, v in metrics.items()) + f" m={m}")
    return 0


def cmd_sweep(args) -> int:
    model = _load_checkpoint(args)
    if not model.cfg.arbitrary:
        print("warning: checkpoint was not trained in arbitrary-ratio mode", file=sys.stderr)
    test = pipeline.load_dataset(model.cfg, "test")
    curve = pipeline.sweep(model, test, args.threads)
    os.makedirs(args.out, exist_ok=True)
    key = _metric_key(model)
    _write_csv(os.path.join(args.out, "sweep.csv"), ["m", key],
               [(m, f"{v:.6f}") for m, v in curve])
    values = [v for _, v in curve]
    best_m = curve[int(np.argmax(values))][0]
    print(f"sweep: peak {max(values):.4f} at m={best_m}, "
          f"full-ratio {values[-1]:.4f}, min {min(values):.4f} at m={curve[int(np.argmin(values))][0]}")
    return 0


def cmd_perturb(args) -> int:
    model = _load_checkpoint(args)
    test = pipeline.load_dataset(model.cfg, "test")
    m = args.m or (model.cfg.block_size**2 if model.cfg.arbitrary else model.cfg.fixed_m)
    levels = [float(x) for x in args.grid.split(",")] if args.grid else {
        "noise": [0, 10, 20, 30, 40, 50, 60],
        "drop": [0.0, 0.25, 0.5, 0.75, 1.0],
        "shuffle": [0.0],
    }[args.kind]
    seed = args.seed if args.seed is not None else 0
    rows = []
    for level in levels:
        spec = PerturbSpec(args.kind,
                           sigma=level if args.kind == "noise" else 0.0,
                           p=level if args.kind == "drop" else 0.0, seed=seed)
        hits = 0
        for i in range(len(test)):
            image = test.images[i]
            if spec.kind == "shuffle":
                image = patch_shuffle(image, model.cfg.block_size, spec.seed + i)
            blocks = sensing.partition(image, model.cfg.block_size)
            phi_m = sensing.truncate_sampling(model.sbm, m)
            if spec.kind == "noise":
                y = add_measurement_noise(blocks, phi_m, spec.sigma, spec.seed + i)
            else:
                y = sensing.sample(blocks, phi_m)
                if spec.kind == "drop":
                    y = patch_drop(y, spec.p, spec.seed + i)
            if y.grid != model.grid:
                y = sensing.interpolate_measurements(y, model.grid)
            hits += int(np.argmax(model.logits(y).data)) == test.labels[i]
        rows.append((args.kind, level, "accuracy", f"{hits / len(test):.6f}", m))
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "perturb.csv"),
               ["kind", "level", "metric", "value", "m"], rows)
    for r in rows:
        print(",".join(str(x) for x in r))
    return 0


def _train_on(cfg, train_set, test_set):
    model, _ = pipeline.train(cfg, train_set, test_set)
    return model


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    ratios = [float(x) for x in args.ratios.split(",")]
    train_set = pipeline.load_dataset(cfg, "train")
    test_set = pipeline.load_dataset(cfg, "test")
    rows = []
    for ratio in ratios:
        if args.kind == "bicubic":
            tr = data.LabeledImages(
                np.stack([baselines.bicubic_down_up(im, ratio) for im in train_set.images]),
                train_set.labels)
            te = data.LabeledImages(
                np.stack([baselines.bicubic_down_up(im, ratio) for im in test_set.images]),
                test_set.labels)
            full = pipeline.parse_config(
                pipeline.config_to_text(cfg), {"ratio_mode": f"fixed:{cfg.block_size**2}"})
            model = _train_on(full, tr, te)
            acc = pipeline.accuracy(model, te, cfg.block_size**2, args.threads)
        elif args.kind == "svd":
            h = cfg.image_size
            k = max(1, int(round(ratio * h * h / (2 * h + 1))))
            def compress(im):
                return np.stack([baselines.svd_compress(ch, k).rebuild() for ch in im])
            te = data.LabeledImages(np.stack([compress(im) for im in test_set.images]),
                                    test_set.labels)
            full = pipeline.parse_config(
                pipeline.config_to_text(cfg), {"ratio_mode": f"fixed:{cfg.block_size**2}"})
            if args.retrain:
                tr = data.LabeledImages(np.stack([compress(im) for im in train_set.images]),
                                        train_set.labels)
                model = _train_on(full, tr, te)
            else:
                model = _train_on(full, train_set, test_set)
            acc = pipeline.accuracy(model, te, cfg.block_size**2, args.threads)
            rows.append((f"svd-k{k}", f"{baselines.svd_ratio(h, h, k):.6f}",
                         "accuracy", f"{acc:.6f}"))
            continue
        elif args.kind == "two-stage":
            m = sensing.ratio_to_m(ratio, cfg.block_size)
            sensed = pipeline.parse_config(pipeline.config_to_text(cfg),
                                           {"ratio_mode": f"fixed:{m}"})
            sensor = pipeline.Model(sensed)
            phi = sensing.truncate_sampling(sensor.sbm, m).data

            def reconstruct(im):
                blocks = sensing.partition(im, cfg.block_size)
                y = sensing.sample(blocks, sensor.sbm.effective().data[:m])
                rec, _ = baselines.least_squares_probe(y, phi)
                return rec.astype(np.float32)

            tr = data.LabeledImages(np.stack([reconstruct(im) for im in train_set.images]),
                                    train_set.labels)
            te = data.LabeledImages(np.stack([reconstruct(im) for im in test_set.images]),
                                    test_set.labels)
            full = pipeline.parse_config(
                pipeline.config_to_text(cfg), {"ratio_mode": f"fixed:{cfg.block_size**2}"})
            model = _train_on(full, tr, te)
            acc = pipeline.accuracy(model, te, cfg.block_size**2, args.threads)
        else:
            raise ConfigError(f"unknown baseline kind {args.kind!r}")
        rows.append((args.kind, ratio, "accuracy", f"{acc:.6f}"))
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "baseline.csv"),
               ["kind", "ratio", "metric", "value"], rows)
    for r in rows:
        print(",".join(str(x) for x in r))
    return 0


def cmd_probe(args) -> int:
    model = _load_checkpoint(args)
    cfg = model.cfg
    test = pipeline.load_dataset(cfg, "test")
    count = min(args.count, len(test.images))
    m = args.m or sensing.ratio_to_m(0.25, cfg.block_size)
    phi_true = sensing.truncate_sampling(model.sbm, m).data
    rng = np.random.RandomState(args.seed if args.seed is not None else 0)
    phi_rand = rng.normal(0, 1.0 / cfg.block_size,
                          size=phi_true.shape).astype(np.float32)
    os.makedirs(args.out, exist_ok=True)
    rows, gaps = [], []
    for i in range(count):
        image = test.images[i]
        blocks = sensing.partition(image, cfg.block_size)
        y = sensing.sample(blocks, phi_true)
        rec_true, p_true = baselines.least_squares_probe(y, phi_true, image)
        rec_rand, p_rand = baselines.least_squares_probe(y, phi_rand, image)
        gaps.append(p_true - p_rand)
        rows.append((i, f"{p_true:.4f}", f"{p_rand:.4f}", f"{p_true - p_rand:.4f}"))
        for tag, rec in (("true", rec_true), ("rand", rec_rand)):
            raw = np.clip(rec * 255.0, 0, 255).astype(np.uint8)
            base = os.path.join(args.out, f"probe_{i:03d}_{tag}")
            raw.tofile(base + ".raw")
            with open(base + ".dims.txt", "w") as f:
                f.write(f"{raw.shape[0]} {raw.shape[1]} {raw.shape[2]}\n")
    _write_csv(os.path.join(args.out, "probe.csv"),
               ["image", "psnr_true_phi", "psnr_random_phi", "gap_db"], rows)
    print(f"mean PSNR gap (true - random sampling matrix): {np.mean(gaps):.4f} dB over {count} images")
    return 0


def cmd_export(args) -> int:
    model = _load_checkpoint(args)
    os.makedirs(args.out, exist_ok=True)
    if args.what == "matrix":
        phi = model.sbm.effective().data
        containers.save_tensors(os.path.join(args.out, "sampling_matrix.tclt"),
                                {"sampling_matrix": phi})
        print(f"wrote sampling_matrix.tclt digest={sensing.matrix_digest(phi):#018x}")
    elif args.what == "matrix-diagnostics":
        phi = model.sbm.effective().data
        lam, off = sensing.orthogonality_diagnostic(phi)
        hist, edges = np.histogram(phi, bins=32)
        rows = [("lambda_est", f"{lam:.6f}"), ("off_diag_energy", f"{off:.6f}")]
        rows += [(f"row_norm_{i}", f"{np.linalg.norm(phi[i]):.6f}") for i in range(phi.shape[0])]
        rows += [(f"hist_{edges[i]:.4f}_{edges[i + 1]:.4f}", int(hist[i]))
                 for i in range(len(hist))]
        _write_csv(os.path.join(args.out, "matrix_diagnostics.csv"), ["name", "value"], rows)
        print(f"lambda_est={lam:.4f} off_diag_energy={off:.4f}")
    elif args.what == "class-tokens":
        if model.cfg.task != "classify":
            raise ConfigError("class-token export needs a classification checkpoint")
        test = pipeline.load_dataset(model.cfg, "test")
        m = model.cfg.block_size**2 if model.cfg.arbitrary else model.cfg.fixed_m
        rows = []
        for i in range(len(test)):
            zk = model.tokens_from_measurements(model.measure(test.images[i], m))
            feat = zk.data[:, 0]
            rows.append([int(test.labels[i])] + [f"{v:.6f}" for v in feat])
        header = ["label"] + [f"f{j}" for j in range(model.cfg.embed_dim)]
        _write_csv(os.path.join(args.out, "class_tokens.csv"), header, rows)
        print(f"wrote {len(rows)} feature rows")
    else:
        raise ConfigError(f"unknown export target {args.what!r}")
    return 0


# -- entry point -------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="cslearn",
                                description="block-based compressive learning toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a model from a config file")
    _common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--m", type=int, default=0, help="measurements per block (0 = config default)")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("sweep", help="evaluate a checkpoint at every ratio")
    _common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("perturb", help="degradation curves under noise/drop/shuffle")
    _common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--kind", choices=["noise", "drop", "shuffle"], required=True)
    sp.add_argument("--grid", help="comma-separated perturbation levels")
    sp.add_argument("--m", type=int, default=0)
    sp.set_defaults(fn=cmd_perturb)

    sp = sub.add_parser("baseline", help="bicubic / svd / two-stage comparisons")
    _common(sp)
    sp.add_argument("--kind", choices=["bicubic", "svd", "two-stage"], required=True)
    sp.add_argument("--ratios", required=True, help="comma-separated sampling ratios")
    sp.add_argument("--retrain", action="store_true")
    sp.set_defaults(fn=cmd_baseline)

    sp = sub.add_parser("probe", help="least-squares reconstruction probe (privacy check)")
    _common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--count", type=int, default=16)
    sp.add_argument("--m", type=int, default=0)
    sp.set_defaults(fn=cmd_probe)

    sp = sub.add_parser("export", help="export matrices, diagnostics, or features")
    _common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--what", choices=["matrix", "matrix-diagnostics", "class-tokens"],
                    required=True)
    sp.set_defaults(fn=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (containers.FormatError, sensing.FormatError, data.FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
