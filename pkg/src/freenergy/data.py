"""Dataset ingestion and synthesis.

IDX (big-endian) image/label parsing with pixel scaling to [0, 1], which
keeps the data inside the non-negative models' domain; synthetic pattern
generators; seeded corruption operators for the memory-retrieval tasks;
and deterministic batching.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .numerics import make_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_CLASSES = 10

SYNTH_KINDS = ("bars", "gaussian_blobs", "random_sign")
CORRUPTION_KINDS = ("mask_fraction", "salt_pepper")


@dataclass
class Dataset:
    """Row-per-item inputs in [0,1] (or +-1 for sign patterns) with
    optional aligned one-hot labels."""

    inputs: np.ndarray
    labels: Optional[np.ndarray] = None
    dims: int = 0

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D (items x dims) array")
        if self.dims == 0:
            self.dims = self.inputs.shape[1]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape[0] != self.inputs.shape[0]:
                raise ValueError(
                    f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
                )

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class CorruptionSpec:
    kind: str
    fraction: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}; choose from {CORRUPTION_KINDS}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("corruption fraction must lie in [0, 1]")


def _read_u32(fh, path, what) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise ValueError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_idx(image_path, label_path=None) -> Dataset:
    """Load an IDX image file (optionally with labels) into a Dataset.

    Pixels are scaled by 1/255; labels become one-hot over 10 classes.
    """
    with open(image_path, "rb") as fh:
        magic = _read_u32(fh, image_path, "magic")
        if magic != IMAGE_MAGIC:
            raise ValueError(
                f"{image_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IMAGE_MAGIC:08x}"
            )
        count = _read_u32(fh, image_path, "item count")
        rows = _read_u32(fh, image_path, "row count")
        cols = _read_u32(fh, image_path, "column count")
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ValueError(f"{image_path}: truncated pixel payload")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    inputs = pixels.astype(np.float64) / 255.0

    labels = None
    if label_path is not None:
        with open(label_path, "rb") as fh:
            magic = _read_u32(fh, label_path, "magic")
            if magic != LABEL_MAGIC:
                raise ValueError(
                    f"{label_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{LABEL_MAGIC:08x}"
                )
            n = _read_u32(fh, label_path, "item count")
            raw = fh.read(n)
            if len(raw) != n:
                raise ValueError(f"{label_path}: truncated label payload")
        if n != count:
            raise ValueError(f"{image_path} has {count} images but {label_path} has {n} labels")
        idx = np.frombuffer(raw, dtype=np.uint8)
        if idx.max(initial=0) >= N_CLASSES:
            raise ValueError(f"{label_path}: label value above {N_CLASSES - 1}")
        labels = one_hot(idx)
    return Dataset(inputs, labels)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 images of shape (n, rows, cols) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def one_hot(indices: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    out = np.zeros((len(indices), n_classes))
    out[np.arange(len(indices)), np.asarray(indices, dtype=int)] = 1.0
    return out


def synth_patterns(kind: str, n: int, dims: int, seed: int) -> Dataset:
    """Deterministic synthetic datasets.

    bars: one-hot rows/columns of a square grid, cycling row 0, row 1, ...
    then columns. gaussian_blobs: a bump at a seeded grid position.
    random_sign: +-1 entries.
    """
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    if n <= 0 or dims <= 0:
        raise ValueError("n and dims must be positive")
    rng = make_rng(seed)

    if kind == "random_sign":
        inputs = np.where(rng.random((n, dims)) < 0.5, -1.0, 1.0)
        return Dataset(inputs)

    side = int(round(np.sqrt(dims)))
    if side * side != dims:
        raise ValueError(f"kind {kind!r} needs a square dimension, got {dims}")

    if kind == "bars":
        inputs = np.zeros((n, dims))
        for i in range(n):
            k = i % (2 * side)
            grid = inputs[i].reshape(side, side)
            if k < side:
                grid[k, :] = 1.0
            else:
                grid[:, k - side] = 1.0
        return Dataset(inputs)

    # gaussian_blobs
    yy, xx = np.mgrid[0:side, 0:side]
    sigma = max(side / 6.0, 1.0)
    inputs = np.zeros((n, dims))
    for i in range(n):
        cy, cx = rng.uniform(0, side - 1, size=2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        inputs[i] = blob.ravel()
    return Dataset(inputs)


def corrupt(v: np.ndarray, spec: CorruptionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt a seeded subset of coordinates; returns (vector, known mask).

    The number of hit coordinates is round-half-up of fraction * dims.
    mask_fraction zeroes the hit coordinates and marks them unknown;
    salt_pepper flips each hit coordinate to 0 or the vector maximum.
    Known coordinates are never altered.
    """
    v = np.asarray(v, dtype=np.float64)
    dims = v.shape[0]
    n_hit = int(np.floor(spec.fraction * dims + 0.5))
    rng = make_rng(spec.seed)
    hit = rng.permutation(dims)[:n_hit]
    known = np.ones(dims, dtype=bool)
    known[hit] = False
    out = v.copy()
    if spec.kind == "mask_fraction":
        out[hit] = 0.0
    else:
        top = v.max() if dims else 0.0
        out[hit] = np.where(rng.random(n_hit) < 0.5, 0.0, top)
    return out, known


def batch_iter(
    d: Dataset, batch_size: int, shuffle_seed: Optional[int] = None
) -> Iterator[tuple[np.ndarray, Optional[np.ndarray]]]:
    """Yield (inputs, labels) batches covering every item exactly once.

    Order is the dataset order, or a seeded permutation when shuffle_seed
    is given.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(d) == 0:
        raise ValueError("dataset is empty")
    order = np.arange(len(d))
    if shuffle_seed is not None:
        order = make_rng(shuffle_seed).permutation(len(d))
    for start in range(0, len(d), batch_size):
        idx = order[start : start + batch_size]
        labels = d.labels[idx] if d.labels is not None else None
        yield d.inputs[idx], labels
