"""Reference helpers shared by tests (independent of the engine under test)."""
import numpy as np


def fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=np.float64)
    d = len(x)
    H = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def rosen_value(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def idx_bytes(array, magic):
    """Big-endian IDX encoding written independently of the parser under test."""
    import struct
    array = np.asarray(array, dtype=np.uint8)
    head = struct.pack(">I", magic) + b"".join(struct.pack(">I", n) for n in array.shape)
    return head + array.tobytes()


def write_mnist_like(directory, n_train=64, n_val=32, seed=0, rows=28, cols=28, gz=False):
    """Synthetic four-file IDX dataset whose labels are learnable from the pixels."""
    import gzip
    from pathlib import Path
    rng = np.random.default_rng(seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for prefix, n in (("train", n_train), ("t10k", n_val)):
        labels = rng.integers(0, 10, n).astype(np.uint8)
        images = rng.integers(0, 60, (n, rows, cols)).astype(np.uint8)
        for i, y in enumerate(labels):
            images[i, int(y) * rows // 10:(int(y) + 1) * rows // 10, :] = 255
        for kind, arr, magic in (("images-idx3", images, 2051), ("labels-idx1", labels, 2049)):
            raw = idx_bytes(arr, magic)
            name = f"{prefix}-{kind}-ubyte"
            if gz:
                (directory / (name + ".gz")).write_bytes(gzip.compress(raw, mtime=0))
            else:
                (directory / name).write_bytes(raw)
    return directory
