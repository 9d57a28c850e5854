"""MNIST IDX ingestion.

IDX files are big-endian: a 4-byte magic (``2051`` for images, ``2049`` for
labels), one 4-byte count per dimension, then raw unsigned bytes.  Files may
be gzip-compressed (``.gz`` suffix).
"""
from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..errors import DataFormatError
from ..models import DatasetBatch

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
DATA_ENV = "HDOPT_DATA_DIR"

# desk-scale subset sizes (train, validation)
SUBSET_SIZES = (10_000, 2_000)

_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "val": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def parse_idx(raw: bytes, expected_magic: int, source="<bytes>") -> np.ndarray:
    """Decode one IDX buffer into a ``uint8`` array."""
    if len(raw) < 4:
        raise DataFormatError(f"{source}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(f"{source}: magic {magic} (0x{magic:08x}), expected {expected_magic}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{source}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    n = int(np.prod(dims))
    if len(raw) - header < n:
        raise DataFormatError(f"{source}: truncated payload, {len(raw) - header} of {n} bytes")
    if len(raw) - header > n:
        raise DataFormatError(f"{source}: {len(raw) - header - n} trailing bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=header).reshape(dims)


def read_idx(path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    return parse_idx(_read_bytes(path), expected_magic, str(path))


def _load_split(directory: Path, split: str, dtype) -> DatasetBatch:
    img_stem, lbl_stem = _FILES[split]
    images = read_idx(_find(directory, img_stem), IMAGE_MAGIC)
    labels = read_idx(_find(directory, lbl_stem), LABEL_MAGIC)
    if images.ndim != 3:
        raise DataFormatError(f"{split} images must be [N, rows, cols], got {images.shape}")
    if len(images) != len(labels):
        raise DataFormatError(f"{split}: {len(images)} images but {len(labels)} labels")
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"{split}: label {labels.max()} out of range")
    x = images.reshape(len(images), -1).astype(dtype) / dtype(255.0)
    return DatasetBatch(x, labels.astype(np.int64))


def resolve_data_dir(path: Optional[str] = None) -> Path:
    """Explicit path, else ``$HDOPT_DATA_DIR``."""
    path = path or os.environ.get(DATA_ENV)
    if not path:
        raise FileNotFoundError(f"no dataset directory given; pass --data or set {DATA_ENV}")
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"dataset directory {p} does not exist")
    return p


def load_mnist_idx(directory=None, subset: bool = False,
                   dtype=np.float64) -> Tuple[DatasetBatch, DatasetBatch]:
    """Load ``(train, val)``; the validation split is the IDX test set.

    ``subset=True`` keeps the first 10,000 training and 2,000 validation
    examples.
    """
    d = resolve_data_dir(None if directory is None else str(directory))
    dtype = np.dtype(dtype).type
    train, val = _load_split(d, "train", dtype), _load_split(d, "val", dtype)
    if subset:
        n_tr, n_va = SUBSET_SIZES
        train = train.subset(slice(0, n_tr))
        val = val.subset(slice(0, n_va))
    return train, val
