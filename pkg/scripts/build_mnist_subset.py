"""Assemble the bundled desk-scale MNIST subset as gzipped IDX files.

Sources (both redistributions of MNIST digits, disjoint from each other):
  * the npm ``mnist`` package (1.1.0): 10,000 digits stored as JSON floats
    in [0, 1] rounded to 3 decimals; ``round(255 * x)`` recovers the bytes.
  * the ``mlxtend`` wheel (0.24.0): ``mnist_5k.csv.gz``, 5,000 digits with
    the label in the last column, sorted by class.

The npm digits become the training split and the mlxtend digits the test
split.  Both are shuffled with a fixed seed so files are reproducible.

Usage:
    python scripts/build_mnist_subset.py --npm-dir PKG/src/digits \
        --mlxtend-wheel mlxtend-0.24.0-py3-none-any.whl --out data/mnist-subset
"""
from __future__ import annotations

import argparse
import gzip
import io
import json
import struct
import zipfile
from pathlib import Path

import numpy as np

SEED = 20240601


def load_npm(digits_dir: Path):
    images, labels = [], []
    for label in range(10):
        flat = np.asarray(json.loads((digits_dir / f"{label}.json").read_text())["data"])
        px = np.rint(flat * 255.0).astype(np.uint8).reshape(-1, 28, 28)
        images.append(px)
        labels.append(np.full(len(px), label, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def load_mlxtend(wheel: Path):
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read("mlxtend/data/data/mnist_5k.csv.gz"))
    arr = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    return arr[:, :-1].astype(np.uint8).reshape(-1, 28, 28), arr[:, -1].astype(np.uint8)


def write_idx(path: Path, array: np.ndarray, magic: int):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", n) for n in array.shape)
    # mtime=0 keeps the gzip bytes reproducible
    with open(path, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
        gz.write(header + array.astype(">u1").tobytes())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--npm-dir", type=Path, required=True)
    ap.add_argument("--mlxtend-wheel", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path("data/mnist-subset"))
    args = ap.parse_args(argv)

    rng = np.random.default_rng(SEED)
    splits = {"train": load_npm(args.npm_dir), "t10k": load_mlxtend(args.mlxtend_wheel)}
    args.out.mkdir(parents=True, exist_ok=True)
    for prefix, (x, y) in splits.items():
        perm = rng.permutation(len(y))
        write_idx(args.out / f"{prefix}-images-idx3-ubyte.gz", x[perm], 2051)
        write_idx(args.out / f"{prefix}-labels-idx1-ubyte.gz", y[perm], 2049)
        print(f"{prefix}: {len(y)} images, class counts {np.bincount(y, minlength=10).tolist()}")


if __name__ == "__main__":
    main()
