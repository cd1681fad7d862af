"""Datasets: IDX container parsing, synthetic generators, split helpers."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    """Base error for malformed IDX files."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


@dataclass(eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("inputs and labels must have equal length")

    def __len__(self) -> int:
        return len(self.x)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.x[indices], self.y[indices], self.num_classes)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxTruncatedError(f"expected {n} bytes, file ended after {len(data)}")
    return data


def _read_be32(f) -> int:
    return struct.unpack(">i", _read_exact(f, 4))[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse big-endian IDX image/label files; pixels normalized to [0, 1]."""
    with open(images_path, "rb") as f:
        magic = _read_be32(f)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(f"bad image magic 0x{magic:08x}")
        count = _read_be32(f)
        rows = _read_be32(f)
        cols = _read_be32(f)
        raw = _read_exact(f, count * rows * cols)
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as f:
        magic = _read_be32(f)
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(f"bad label magic 0x{magic:08x}")
        label_count = _read_be32(f)
        labels = np.frombuffer(_read_exact(f, label_count), dtype=np.uint8)
    if label_count != count:
        raise IdxCountMismatchError(
            f"{count} images but {label_count} labels"
        )
    x = images.astype(float) / 255.0
    y = labels.astype(np.int64)
    return Dataset(x, y, int(y.max()) + 1 if len(y) else 0)


def save_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write images (floats in [0,1] or uint8) and labels as IDX files."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    labels = np.asarray(labels).astype(np.uint8)
    if len(images) != len(labels):
        raise ValueError("images and labels must have equal length")
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())


def make_synthetic(
    kind: str, n: int, noise: float, seed: int, num_classes: int = 3
) -> Dataset:
    """Seeded 2-D toy datasets.

    `blobs`: Gaussian clusters at fixed centers on a radius-4 circle.
    `two_moons`: the usual interleaved half-circles (unit radius, centers
    (0,0) and (1,0.5)) plus isotropic Gaussian noise.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    if kind == "blobs":
        angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
        centers = 4.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        y = np.arange(n) % num_classes
        x = centers[y] + noise * rng.normal(size=(n, 2))
        order = rng.permutation(n)
        return Dataset(x[order], y[order].astype(np.int64), num_classes)
    if kind == "two_moons":
        n_out = n // 2
        n_in = n - n_out
        t_out = np.linspace(0.0, np.pi, n_out)
        t_in = np.linspace(0.0, np.pi, n_in)
        outer = np.stack([np.cos(t_out), np.sin(t_out)], axis=1)
        inner = np.stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1)
        x = np.concatenate([outer, inner])
        y = np.concatenate([np.zeros(n_out, np.int64), np.ones(n_in, np.int64)])
        x = x + noise * rng.normal(size=x.shape)
        order = rng.permutation(n)
        return Dataset(x[order], y[order], 2)
    raise ValueError(f"unknown synthetic kind {kind!r}")


def make_image_classes(
    n: int,
    num_classes: int = 10,
    size: int = 28,
    shift: int = 3,
    noise: float = 0.25,
    blobs_per_class: int = 5,
    seed: int = 0,
) -> Dataset:
    """Seeded 28x28 grayscale classes built from blob constellations.

    Each class is a fixed constellation of Gaussian bumps; samples get an
    integer translation up to ``shift`` pixels, per-blob amplitude jitter,
    and pixel noise. Difficulty is controlled by ``shift`` and ``noise``.
    """
    ss = np.random.SeedSequence(seed)
    template_rng, sample_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    lo, hi = 8.0, size - 8.0
    centers = template_rng.uniform(lo, hi, size=(num_classes, blobs_per_class, 2))
    widths = template_rng.uniform(1.5, 3.0, size=(num_classes, blobs_per_class))

    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    y = np.arange(n) % num_classes
    x = np.empty((n, size, size))
    for i in range(n):
        c = y[i]
        dy, dx = sample_rng.integers(-shift, shift + 1, size=2)
        amp = sample_rng.uniform(0.7, 1.3, size=blobs_per_class)
        canvas = np.zeros((size, size))
        for k in range(blobs_per_class):
            cy, cx = centers[c, k, 0] + dy, centers[c, k, 1] + dx
            canvas += amp[k] * np.exp(
                -((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * widths[c, k] ** 2)
            )
        canvas = canvas / canvas.max()
        canvas += noise * sample_rng.normal(size=canvas.shape)
        x[i] = np.clip(canvas, 0.0, 1.0)
    order = sample_rng.permutation(n)
    return Dataset(x[order], y[order].astype(np.int64), num_classes)


def split(ds: Dataset, sizes: tuple[int, ...], seed: int) -> tuple[Dataset, ...]:
    """Deterministic disjoint splits of the given sizes after a seeded shuffle."""
    if sum(sizes) > len(ds):
        raise ValueError(f"cannot split {len(ds)} samples into {sizes}")
    order = np.random.default_rng(seed).permutation(len(ds))
    out = []
    start = 0
    for s in sizes:
        out.append(ds.subset(order[start : start + s]))
        start += s
    return tuple(out)


def stratified_take(ds: Dataset, count: int, seed: int) -> tuple[Dataset, Dataset]:
    """Split off ``count`` samples covering every class as evenly as possible."""
    if count < ds.num_classes:
        raise ValueError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    picked: list[int] = []
    per_class = count // ds.num_classes
    extra = count % ds.num_classes
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.y == c)
        want = per_class + (1 if c < extra else 0)
        if len(members) < want:
            raise ValueError(f"class {c} has only {len(members)} samples")
        picked.extend(rng.choice(members, size=want, replace=False).tolist())
    picked_arr = np.array(sorted(picked))
    rest = np.setdiff1d(np.arange(len(ds)), picked_arr)
    return ds.subset(picked_arr), ds.subset(rest)
