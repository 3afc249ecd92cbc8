#!/usr/bin/env python3
"""Generate a desk-scale handwritten-digit stand-in dataset in MNIST IDX
format: digits 0-9 in a dozen font faces with random rotation, shear,
scale, shift, blur, and sensor noise, rendered at 28x28. Output files use
the standard MNIST names, so real MNIST files can replace them without
code changes.

Usage: python scripts/make_digits_idx.py OUTDIR [--train N] [--test N] [--seed S]
"""

import argparse
import os
import sys

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont
from scipy.ndimage import gaussian_filter, map_coordinates

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from cslearn.data import write_idx_images, write_idx_labels  # noqa: E402

FONT_FILES = [
    "DejaVuSans.ttf", "DejaVuSans-Bold.ttf", "DejaVuSans-Oblique.ttf",
    "DejaVuSansMono.ttf", "DejaVuSansMono-Bold.ttf", "DejaVuSansMono-Oblique.ttf",
    "DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf", "DejaVuSerif-Italic.ttf",
    "STIXGeneral.ttf", "STIXGeneralBol.ttf", "STIXGeneralItalic.ttf",
]


def find_fonts() -> list[str]:
    import matplotlib
    ttf_dir = os.path.join(os.path.dirname(matplotlib.__file__),
                           "mpl-data", "fonts", "ttf")
    paths = [os.path.join(ttf_dir, name) for name in FONT_FILES]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"fonts not found in the matplotlib bundle: {missing}")
    return paths


def elastic_warp(canvas: Image.Image, rng: np.random.RandomState) -> Image.Image:
    """Handwriting-like warp: a smooth random displacement field bends the
    strokes, so class identity lives in fine curvature detail."""
    alpha = rng.uniform(5.0, 11.0)
    arr = np.asarray(canvas, dtype=np.float32)
    dy = gaussian_filter(rng.uniform(-1, 1, arr.shape), 7.0) * alpha
    dx = gaussian_filter(rng.uniform(-1, 1, arr.shape), 7.0) * alpha
    yy, xx = np.meshgrid(np.arange(56), np.arange(56), indexing="ij")
    warped = map_coordinates(arr, [yy + dy, xx + dx], order=1, mode="constant")
    return Image.fromarray(np.clip(warped, 0, 255).astype(np.uint8))


def render_digit(digit: int, rng: np.random.RandomState,
                 font_paths: list[str]) -> np.ndarray:
    size = rng.randint(26, 41)
    font = ImageFont.truetype(font_paths[rng.randint(len(font_paths))], size)
    canvas = Image.new("L", (56, 56), 0)
    draw = ImageDraw.Draw(canvas)
    left, top, right, bottom = draw.textbbox((0, 0), str(digit), font=font)
    x = 28 - (right + left) / 2 + rng.uniform(-4, 4)
    y = 28 - (bottom + top) / 2 + rng.uniform(-4, 4)
    draw.text((x, y), str(digit), fill=255, font=font)
    shear = rng.uniform(-0.15, 0.15)
    canvas = canvas.transform((56, 56), Image.AFFINE,
                              (1, shear, -28 * shear, 0, 1, 0),
                              resample=Image.BILINEAR)
    canvas = canvas.rotate(rng.uniform(-22, 22), resample=Image.BILINEAR,
                           center=(28, 28))
    canvas = elastic_warp(canvas, rng)
    canvas = canvas.filter(ImageFilter.GaussianBlur(rng.uniform(0.0, 0.3)))
    img = np.asarray(canvas.resize((28, 28), Image.BILINEAR), dtype=np.float32)
    img *= rng.uniform(0.9, 1.0)  # exposure variation
    img += rng.normal(0, 2.0, img.shape)  # sensor-ish noise
    return np.clip(img, 0, 255).astype(np.uint8)


def make_split(count: int, rng: np.random.RandomState, font_paths: list[str]):
    labels = rng.randint(0, 10, size=count).astype(np.uint8)
    images = np.stack([render_digit(int(d), rng, font_paths) for d in labels])
    return images, labels


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir")
    ap.add_argument("--train", type=int, default=4000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    os.makedirs(args.outdir, exist_ok=True)
    font_paths = find_fonts()
    rng = np.random.RandomState(args.seed)
    tr_images, tr_labels = make_split(args.train, rng, font_paths)
    te_images, te_labels = make_split(args.test, rng, font_paths)
    write_idx_images(os.path.join(args.outdir, "train-images-idx3-ubyte"), tr_images)
    write_idx_labels(os.path.join(args.outdir, "train-labels-idx1-ubyte"), tr_labels)
    write_idx_images(os.path.join(args.outdir, "t10k-images-idx3-ubyte"), te_images)
    write_idx_labels(os.path.join(args.outdir, "t10k-labels-idx1-ubyte"), te_labels)
    print(f"wrote {args.train} train / {args.test} test digit images to {args.outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
