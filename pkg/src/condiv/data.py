"""Datasets, synthetic generators, the CDL1 binary format and epoch batching.

CDL1 layout (little-endian)::

    magic "CDL1" | u32 n | u32 C | u32 H | u32 W | u8 has_labels | u8 dtype (1 = f32)
    n*C*H*W f32 pixels, row-major
    n u32 labels            (only when has_labels == 1)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from os import PathLike

import numpy as np

from .nn import seeded_rng

MAGIC = b"CDL1"
HEADER = struct.Struct("<4sIIIIBB")
DTYPE_F32 = 1


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


@dataclass
class Dataset:
    images: np.ndarray                       # float32, n x C x H x W, values in [0, 1]
    labels: np.ndarray | None = None         # int64, n
    name: str = "dataset"
    num_classes: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise ValueError(f"images must be n x C x H x W, got shape {self.images.shape}")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.images),):
                raise ValueError(f"expected {len(self.images)} labels, got {self.labels.shape}")
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("labels must be nonnegative")
            k = int(self.labels.max()) + 1 if self.labels.size else 0
            if self.num_classes is None:
                self.num_classes = k
            elif k > self.num_classes:
                raise ValueError(f"label {k - 1} out of range for {self.num_classes} classes")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.sample_shape))

    @property
    def is_vector(self) -> bool:
        c, h, _ = self.sample_shape
        return c == 1 and h == 1

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1).astype(np.float64)

    def with_labels(self, labels) -> Dataset:
        return Dataset(self.images, labels, self.name, None, dict(self.meta))

    def equals(self, other: Dataset) -> bool:
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels))
        return (self.images.shape == other.images.shape
                and self.images.tobytes() == other.images.tobytes() and same_labels)


def gen_gaussian_clusters(k: int, n_per: int, dim: int = 2, means=None, stddev: float = 0.3,
                          rng: np.random.Generator | None = None, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs, affinely rescaled into [0, 1].

    Default means sit on a circle of radius 2*sqrt(2) in the first two
    coordinates, which for ``k=2`` gives (-2, -2) and (2, 2).  The applied map
    ``x01 = (x - offset) / scale`` is stored in ``meta``.
    """
    if k < 2:
        raise ValueError(f"need at least two clusters, got k={k}")
    if not stddev > 0:
        raise ValueError(f"stddev must be > 0, got {stddev}")
    rng = rng if rng is not None else seeded_rng(seed)
    if means is None:
        angles = np.pi * (2 * np.arange(k) / k + 1.25)
        means = np.zeros((k, dim))
        means[:, 0] = 2 * np.sqrt(2) * np.cos(angles)
        if dim > 1:
            means[:, 1] = 2 * np.sqrt(2) * np.sin(angles)
        means = np.round(means, 12)
    means = np.asarray(means, dtype=np.float64).reshape(k, dim)
    for i in range(k):
        for j in range(i):
            if np.array_equal(means[i], means[j]):
                raise ValueError(f"cluster means {j} and {i} coincide")
    x = np.concatenate([rng.normal(means[c], stddev, (n_per, dim)) for c in range(k)])
    labels = np.repeat(np.arange(k), n_per)
    lo, hi = float(x.min()), float(x.max())
    scale = hi - lo if hi > lo else 1.0
    x01 = np.clip((x - lo) / scale, 0.0, 1.0)
    return Dataset(x01.reshape(-1, 1, 1, dim), labels, f"clusters-k{k}", k,
                   {"offset": lo, "scale": scale, "means": means.tolist(), "stddev": stddev})


SHAPES = ("square", "circle", "bar")


def gen_toy_shapes(n_per: int, size: int = 16, rng: np.random.Generator | None = None,
                   seed: int = 0) -> Dataset:
    """3 x size x size images of one filled shape on a noisy background; class = shape."""
    rng = rng if rng is not None else seeded_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    images, labels = [], []
    for label, shape in enumerate(SHAPES):
        for _ in range(n_per):
            bg = rng.uniform(0.0, 0.3, 3)
            fg = rng.uniform(0.5, 1.0, 3)
            r = rng.uniform(0.2, 0.35) * size
            cy, cx = rng.uniform(r, size - r, 2)
            if shape == "square":
                mask = (np.abs(yy - cy) <= r * 0.8) & (np.abs(xx - cx) <= r * 0.8)
            elif shape == "circle":
                mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            elif rng.uniform() < 0.5:
                mask = (np.abs(yy - cy) <= r * 0.3) & (np.abs(xx - cx) <= r)
            else:
                mask = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r * 0.3)
            img = np.where(mask[None], fg[:, None, None], bg[:, None, None])
            img = img + rng.normal(0.0, 0.03, img.shape)
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(label)
    return Dataset(np.stack(images), np.array(labels), "toy-shapes", len(SHAPES))


def encode_dataset(ds: Dataset) -> bytes:
    n, c, h, w = ds.images.shape
    has_labels = ds.labels is not None
    parts = [HEADER.pack(MAGIC, n, c, h, w, int(has_labels), DTYPE_F32),
             ds.images.astype("<f4").tobytes()]
    if has_labels:
        parts.append(ds.labels.astype("<u4").tobytes())
    return b"".join(parts)


def decode_dataset(buf: bytes, name: str = "dataset", num_classes: int | None = None) -> Dataset:
    if len(buf) < HEADER.size:
        raise DatasetFormatError(f"truncated header: {len(buf)} of {HEADER.size} bytes", len(buf))
    magic, n, c, h, w, has_labels, dtype = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if has_labels not in (0, 1):
        raise DatasetFormatError(f"has_labels flag must be 0 or 1, got {has_labels}", 20)
    if dtype != DTYPE_F32:
        raise DatasetFormatError(f"unsupported dtype tag {dtype}", 21)
    off = HEADER.size
    n_pix = n * c * h * w
    need = off + 4 * n_pix + (4 * n if has_labels else 0)
    if len(buf) < need:
        raise DatasetFormatError(f"truncated payload: expected {need} bytes, got {len(buf)}", len(buf))
    if len(buf) > need:
        raise DatasetFormatError(f"{len(buf) - need} trailing bytes", need)
    images = np.frombuffer(buf, dtype="<f4", count=n_pix, offset=off).reshape(n, c, h, w)
    if n_pix and not (np.isfinite(images).all() and images.min() >= 0.0 and images.max() <= 1.0):
        bad = int(np.flatnonzero(~((images >= 0) & (images <= 1)).reshape(-1))[0])
        raise DatasetFormatError("pixel value outside [0, 1]", off + 4 * bad)
    labels = None
    if has_labels:
        loff = off + 4 * n_pix
        labels = np.frombuffer(buf, dtype="<u4", count=n, offset=loff).astype(np.int64)
        if num_classes is not None and n:
            bad = np.flatnonzero(labels >= num_classes)
            if bad.size:
                i = int(bad[0])
                raise DatasetFormatError(
                    f"label {labels[i]} out of range for {num_classes} classes", loff + 4 * i)
    return Dataset(images.astype(np.float32), labels, name, num_classes)


def write_dataset(ds: Dataset, path: str | PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_dataset(ds))


def read_dataset(path: str | PathLike, num_classes: int | None = None) -> Dataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_dataset(buf, name=str(path), num_classes=num_classes)


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    seed: int = 0
    drop_last: bool = True


def epoch_batches(n: int, plan: BatchPlan, epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; a pure function of ``(seed, epoch)``."""
    if plan.batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {plan.batch_size}")
    if plan.drop_last and plan.batch_size > n:
        raise ValueError(f"batch_size {plan.batch_size} exceeds dataset size {n} with drop_last")
    perm = seeded_rng(plan.seed, 0xBA7C, epoch).permutation(n)
    stop = n - n % plan.batch_size if plan.drop_last else n
    return [perm[i:i + plan.batch_size] for i in range(0, stop, plan.batch_size)]
