"""MNIST (IDX) and CIFAR-10 (binary batch) readers, writers and splitters.

IDX: big-endian magic ``0x00000803`` (images, u8, N x rows x cols) or
``0x00000801`` (labels, u8, N), then one big-endian u32 per dimension, then
raw bytes.

CIFAR-10 binary: records of 3073 bytes, ``label | R[1024] | G[1024] | B[1024]``,
each plane row-major 32x32.

Pixels are scaled to ``[0, 1]`` by dividing by 255.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetError
from .tensor import RngStream

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_TRAIN = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST = ("test_batch.bin",)


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    num_classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.num_classes)


def _read(path) -> bytes:
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise DatasetError(f"missing dataset file {path}")
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    return data


def parse_idx(data: bytes, expect_magic: int) -> np.ndarray:
    if len(data) < 8:
        raise DatasetError("IDX file shorter than its header")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expect_magic:
        raise DatasetError(f"IDX magic mismatch: got {magic:#010x}, expected {expect_magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DatasetError("IDX file truncated inside the dimension header")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - header != count:
        raise DatasetError(f"IDX payload has {len(data) - header} bytes, header promises {count}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair into a (N,1,28,28) dataset."""
    imgs = parse_idx(_read(images_path), IDX_IMAGES)
    labels = parse_idx(_read(labels_path), IDX_LABELS)
    if len(imgs) != len(labels):
        raise DatasetError(f"count mismatch: {len(imgs)} images vs {len(labels)} labels")
    if labels.size and labels.max() > 9:
        raise DatasetError(f"label {int(labels.max())} out of range")
    return Dataset(imgs[:, None, :, :].astype(np.float64) / 255.0, labels.astype(np.int64))


def load_cifar10(batch_paths: Sequence) -> Dataset:
    """Concatenate CIFAR-10 binary batch files into a (N,3,32,32) dataset."""
    images, labels = [], []
    for p in batch_paths:
        raw = _read(p)
        if len(raw) % CIFAR_RECORD:
            raise DatasetError(f"{p}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        if rec.size and rec[:, 0].max() > 9:
            raise DatasetError(f"{p}: label byte {int(rec[:, 0].max())} > 9")
        labels.append(rec[:, 0].astype(np.int64))
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
    if not images:
        raise DatasetError("no CIFAR-10 batch files given")
    return Dataset(np.concatenate(images), np.concatenate(labels))


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError("IDX writer supports uint8 payloads only")
    magic = 0x0800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def encode_cifar(images_u8: np.ndarray, labels: np.ndarray) -> bytes:
    """``images_u8`` is (N,3,32,32) uint8."""
    n = len(labels)
    out = np.empty((n, CIFAR_RECORD), dtype=np.uint8)
    out[:, 0] = labels
    out[:, 1:] = images_u8.reshape(n, -1)
    return out.tobytes()


def find_mnist(data_dir) -> tuple[Dataset, Dataset | None]:
    """Load ``train-*`` (required) and ``t10k-*`` (optional) IDX files."""
    d = Path(data_dir)
    for sub in (d, d / "mnist"):
        if (sub / MNIST_FILES["train"][0]).exists() or (sub / (MNIST_FILES["train"][0] + ".gz")).exists():
            train = load_mnist(*(sub / f for f in MNIST_FILES["train"]))
            test_paths = [sub / f for f in MNIST_FILES["test"]]
            test = None
            if all(p.exists() or p.with_name(p.name + ".gz").exists() for p in test_paths):
                test = load_mnist(*test_paths)
            return train, test
    raise DatasetError(f"no MNIST IDX files under {d}")


def find_cifar10(data_dir) -> tuple[Dataset, Dataset | None]:
    d = Path(data_dir)
    for sub in (d, d / "cifar-10-batches-bin", d / "cifar10"):
        present = [sub / f for f in CIFAR_TRAIN if (sub / f).exists()]
        if present:
            test = None
            if (sub / CIFAR_TEST[0]).exists():
                test = load_cifar10([sub / CIFAR_TEST[0]])
            return load_cifar10(present), test
    raise DatasetError(f"no CIFAR-10 batch files under {d}")


def _stratified_order(labels: np.ndarray, rng: RngStream, num_classes: int) -> list[np.ndarray]:
    return [rng.split("class", c).permutation(np.flatnonzero(labels == c))
            if np.any(labels == c) else np.empty(0, dtype=np.int64)
            for c in range(num_classes)]


def _quota(counts: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder apportionment of ``n`` across classes, capped by availability."""
    total = counts.sum()
    if n == 0:
        return np.zeros_like(counts)
    exact = counts * n / total
    q = np.floor(exact).astype(np.int64)
    rest = n - q.sum()
    order = np.lexsort((np.arange(len(counts)), -(exact - q)))
    for c in order:
        if rest == 0:
            break
        if q[c] < counts[c]:
            q[c] += 1
            rest -= 1
    return q


def subset(dataset: Dataset, n_train: int, n_test: int, seed: int, stratified: bool = True):
    """Disjoint train/test subsets of ``dataset``, deterministic in ``seed``.

    Stratified subsets keep every class within one sample of its proportional
    share.
    """
    n = len(dataset)
    if n_train < 0 or n_test < 0 or n_train + n_test > n:
        raise DatasetError(f"cannot draw {n_train}+{n_test} samples from {n}")
    rng = RngStream(seed).split("subset")
    if not stratified:
        perm = rng.permutation(n)
        return dataset.take(perm[:n_train]), dataset.take(perm[n_train:n_train + n_test])
    k = dataset.num_classes
    order = _stratified_order(dataset.labels, rng, k)
    counts = np.array([len(o) for o in order])
    qtrain = _quota(counts, n_train)
    qtest = _quota(counts - qtrain, n_test)
    tr = np.concatenate([o[:a] for o, a in zip(order, qtrain)])
    te = np.concatenate([o[a:a + b] for o, a, b in zip(order, qtrain, qtest)])
    return dataset.take(rng.split("mix", 0).permutation(tr)), dataset.take(rng.split("mix", 1).permutation(te))


def kfold_split(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """``k`` (train_idx, val_idx) pairs whose validation folds partition ``range(n)``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    perm = RngStream(seed).split("kfold").permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(val)))
    return out
