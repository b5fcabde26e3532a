"""Convert redistributed copies of MNIST and CIFAR-10 into their native formats.

The canonical download hosts are not always reachable, but two packages on
the public registries ship the raw pixels:

* ``mlxtend`` (PyPI, wheel 0.24.0) contains ``mlxtend/data/data/mnist_5k.csv.gz``,
  5000 MNIST training digits (500 per class), one row of 784 pixels plus the
  label per line.
* ``tfjs-cifar10`` (npm, 1.1.1) contains the six CIFAR-10 batches as PNG
  sprites, one 32x32 RGB image per 1024-pixel row, plus JSON label lists.

This script writes ``train-images-idx3-ubyte``/``train-labels-idx1-ubyte``
and ``data_batch_{1..5}.bin``/``test_batch.bin`` so the regular loaders in
``nlrelu.data`` read them unchanged::

    pip download mlxtend==0.24.0 --no-deps -d /tmp/src
    unzip -j /tmp/src/mlxtend-0.24.0-py3-none-any.whl '*mnist_5k.csv.gz' -d /tmp/src
    npm pack tfjs-cifar10@1.1.1 && tar xzf tfjs-cifar10-1.1.1.tgz -C /tmp/src
    python tools/make_desk_datasets.py --mnist-csv /tmp/src/mnist_5k.csv.gz \\
        --cifar-dir /tmp/src/package --out /root/data
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

from nlrelu.data import encode_cifar, encode_idx


def convert_mnist(csv_path: Path, out_dir: Path) -> int:
    rows = np.loadtxt(csv_path, delimiter=",", dtype=np.int64)
    pixels, labels = rows[:, :784], rows[:, 784]
    if pixels.min() < 0 or pixels.max() > 255 or labels.max() > 9:
        raise ValueError(f"{csv_path}: values out of range")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "train-images-idx3-ubyte").write_bytes(
        encode_idx(pixels.astype(np.uint8).reshape(-1, 28, 28)))
    (out_dir / "train-labels-idx1-ubyte").write_bytes(encode_idx(labels.astype(np.uint8)))
    return len(labels)


def _sprite_to_nchw(png: Path) -> np.ndarray:
    rgb = np.asarray(Image.open(png).convert("RGB"), dtype=np.uint8)  # (N, 1024, 3)
    # each row is one image in row-major pixel order, channels interleaved
    return rgb.reshape(-1, 32, 32, 3).transpose(0, 3, 1, 2)


def convert_cifar(src: Path, out_dir: Path) -> dict[str, int]:
    train_labels = np.array(json.loads((src / "train_lables.json").read_text()), dtype=np.uint8)
    test_labels = np.array(json.loads((src / "test_lables.json").read_text()), dtype=np.uint8)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for i in range(1, 6):
        imgs = _sprite_to_nchw(src / f"data_batch_{i}.png")
        lab = train_labels[(i - 1) * 10000 : i * 10000]
        if len(imgs) != len(lab):
            raise ValueError(f"batch {i}: {len(imgs)} images, {len(lab)} labels")
        (out_dir / f"data_batch_{i}.bin").write_bytes(encode_cifar(imgs, lab))
        counts[f"data_batch_{i}"] = len(lab)
    imgs = _sprite_to_nchw(src / "test_batch.png")
    if len(imgs) != len(test_labels):
        raise ValueError(f"test batch: {len(imgs)} images, {len(test_labels)} labels")
    (out_dir / "test_batch.bin").write_bytes(encode_cifar(imgs, test_labels))
    counts["test_batch"] = len(test_labels)
    return counts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mnist-csv", type=Path)
    ap.add_argument("--cifar-dir", type=Path, help="unpacked tfjs-cifar10 package directory")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args(argv)
    if args.mnist_csv:
        n = convert_mnist(args.mnist_csv, args.out / "mnist")
        print(f"mnist: {n} training images -> {args.out / 'mnist'}")
    if args.cifar_dir:
        counts = convert_cifar(args.cifar_dir, args.out / "cifar-10-batches-bin")
        print(f"cifar-10: {counts} -> {args.out / 'cifar-10-batches-bin'}")


if __name__ == "__main__":
    main()
