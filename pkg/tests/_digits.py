"""Deterministic 28x28 digit-image generator for desk-scale runs.

Renders seven-segment-style glyphs with randomized geometry, stroke
intensity, and pixel noise, then packs them as IDX files so runs exercise
the same ingestion path as real handwritten-digit data. Set
FREENERGY_MNIST_DIR to a directory holding the canonical
train-images-idx3-ubyte / train-labels-idx1-ubyte / t10k-* files to use
the real dataset instead.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from freenergy.data import write_idx_images, write_idx_labels
from freenergy.numerics import make_rng

#      A
#    F   B
#      G
#    E   C
#      D
_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGEDC",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def _render(digit: int, rng: np.random.Generator) -> np.ndarray:
    img = np.zeros((28, 28))
    w = int(rng.integers(10, 15))
    h = int(rng.integers(16, 21))
    x0 = int(rng.integers(2, 28 - w - 1))
    y0 = int(rng.integers(2, 28 - h - 1))
    t = int(rng.integers(2, 4))
    mid = y0 + h // 2
    bright = rng.uniform(0.65, 1.0)

    def bar(r0, r1, c0, c1):
        img[max(r0, 0) : min(r1, 28), max(c0, 0) : min(c1, 28)] = bright

    segs = _SEGMENTS[digit]
    if "A" in segs:
        bar(y0, y0 + t, x0, x0 + w)
    if "D" in segs:
        bar(y0 + h - t, y0 + h, x0, x0 + w)
    if "G" in segs:
        bar(mid - t // 2, mid - t // 2 + t, x0, x0 + w)
    if "F" in segs:
        bar(y0, mid, x0, x0 + t)
    if "B" in segs:
        bar(y0, mid, x0 + w - t, x0 + w)
    if "E" in segs:
        bar(mid, y0 + h, x0, x0 + t)
    if "C" in segs:
        bar(mid, y0 + h, x0 + w - t, x0 + w)

    img += rng.normal(0.0, 0.06, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_digit_idx(dirpath, n_train: int, n_test: int, seed: int = 7) -> dict:
    """Write train/test IDX files into dirpath and return their paths.

    If FREENERGY_MNIST_DIR points at real IDX files, those are returned
    instead of generating anything.
    """
    env = os.environ.get("FREENERGY_MNIST_DIR")
    if env:
        base = Path(env)
        paths = {
            "train_images": base / "train-images-idx3-ubyte",
            "train_labels": base / "train-labels-idx1-ubyte",
            "test_images": base / "t10k-images-idx3-ubyte",
            "test_labels": base / "t10k-labels-idx1-ubyte",
        }
        if all(p.exists() for p in paths.values()):
            return {k: str(v) for k, v in paths.items()} | {"surrogate": False}

    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    out = {}
    for split, n in (("train", n_train), ("test", n_test)):
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        images = np.zeros((n, 28, 28), dtype=np.uint8)
        for i, d in enumerate(labels):
            images[i] = np.round(_render(int(d), rng) * 255).astype(np.uint8)
        img_path = dirpath / f"{split}-images-idx3-ubyte"
        lab_path = dirpath / f"{split}-labels-idx1-ubyte"
        write_idx_images(img_path, images)
        write_idx_labels(lab_path, labels)
        out[f"{split}_images"] = str(img_path)
        out[f"{split}_labels"] = str(lab_path)
    out["surrogate"] = True
    return out
