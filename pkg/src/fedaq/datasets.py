"""Datasets: synthetic Gaussian clusters, IDX image files, and IID client partitions."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidArgument("features must be an N x F matrix with N >= 1")
        if y.size != X.shape[0]:
            raise InvalidArgument(f"{X.shape[0]} feature rows but {y.size} labels")
        if y.min() < 0:
            raise InvalidArgument("labels must be non-negative")
        if not np.all(np.isfinite(X)):
            raise InvalidArgument("features must be finite")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.name)


def class_means(F: int, C: int) -> np.ndarray:
    """Fixed cluster centres at radius 2: scaled basis vectors when C <= F."""
    if C <= F:
        return 2.0 * np.eye(C, F)
    m = np.random.default_rng(0x5EED).standard_normal((C, F))
    return 2.0 * m / np.linalg.norm(m, axis=1, keepdims=True)


def synth_generate(n_samples: int, F: int, C: int, cluster_spread: float, seed: int,
                   name: str = "synthetic") -> Dataset:
    """Balanced Gaussian clusters around ``class_means(F, C)``."""
    if n_samples < C:
        raise InvalidArgument(f"need at least {C} samples for {C} classes")
    if cluster_spread < 0:
        raise InvalidArgument("cluster_spread must be non-negative")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_samples) % C)
    noise = rng.standard_normal((n_samples, F))
    X = class_means(F, C)[labels] + cluster_spread * noise
    return Dataset(X, labels, name)


def _read_header(buf: bytes, path: str, magic: int, ndim: int) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise FormatError(f"{path}: truncated IDX header", offset=len(buf))
    (got,) = struct.unpack_from(">I", buf, 0)
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    return struct.unpack_from(f">{ndim}I", buf, 4)


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    path = Path(path)
    buf = path.read_bytes()
    dims = _read_header(buf, str(path), magic, ndim)
    start = 4 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - start < count:
        raise FormatError(
            f"{path}: payload has {len(buf) - start} bytes, header promises {count}",
            offset=len(buf),
        )
    if len(buf) - start > count:
        raise FormatError(f"{path}: {len(buf) - start - count} trailing bytes", offset=start + count)
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=start).reshape(dims)


def idx_load(images_path, labels_path, name: str = "idx") -> Dataset:
    """Load u8 IDX images (count x rows x cols) and labels; pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds "
            f"{labels.shape[0]} labels",
            offset=4,
        )
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), name)


def write_idx(path, array: np.ndarray):
    """Write a u8 array as IDX (magic 0x0000080N where N is the rank)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


@dataclass(frozen=True)
class Partition:
    client_indices: tuple[np.ndarray, ...]
    p: np.ndarray

    @property
    def n(self) -> int:
        return len(self.client_indices)

    @property
    def sizes(self) -> list[int]:
        return [idx.size for idx in self.client_indices]


def iid_partition(ds: Dataset, n: int, seed: int) -> Partition:
    """Shuffle and split into ``n`` parts whose sizes differ by at most one."""
    N = len(ds)
    if n < 1 or n > N:
        raise InvalidArgument(f"cannot split {N} samples across {n} clients")
    perm = np.random.default_rng(seed).permutation(N)
    parts = tuple(np.array(part, dtype=np.int64) for part in np.array_split(perm, n))
    sizes = np.array([part.size for part in parts], dtype=np.float64)
    p = sizes / N
    p = p / p.sum()
    return Partition(parts, p)
