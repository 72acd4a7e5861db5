#!/usr/bin/env python3
"""Populate data/mnist/ with the canonical MNIST IDX files, gzipped.

Accepts any directory holding the four standard files

    train-images-idx3-ubyte  train-labels-idx1-ubyte
    t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte

(raw or already .gz) and writes deterministic .gz copies. Sources that work
offline include the `mnist-data` npm package, which ships the canonical
files verbatim:

    npm install mnist-data --prefix /tmp/npmmnist
    python scripts/fetch_mnist.py /tmp/npmmnist/node_modules/mnist-data/data data/mnist

The files are validated (magic numbers, counts, the official per-digit
label histogram) before anything is written.
"""

import gzip
import struct
import sys
from pathlib import Path

import numpy as np

STEMS = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

OFFICIAL_LABEL_COUNTS = {
    "train-labels-idx1-ubyte": [5923, 6742, 5958, 6131, 5842, 5421, 5918,
                                6265, 5851, 5949],
    "t10k-labels-idx1-ubyte": [980, 1135, 1032, 1010, 982, 892, 958, 1028,
                               974, 1009],
}


def read_raw(src_dir: Path, stem: str) -> bytes:
    for name, opener in ((f"{stem}.gz", gzip.open), (stem, open)):
        path = src_dir / name
        if path.exists():
            with opener(path, "rb") as f:
                return f.read()
    raise FileNotFoundError(f"missing {stem}[.gz] under {src_dir}")


def validate(stem: str, raw: bytes):
    if "images" in stem:
        magic, n, rows, cols = struct.unpack(">iiii", raw[:16])
        assert magic == 2051, f"{stem}: bad magic {magic}"
        assert (rows, cols) == (28, 28), f"{stem}: unexpected shape"
        assert len(raw) == 16 + n * 784, f"{stem}: truncated"
    else:
        magic, n = struct.unpack(">ii", raw[:8])
        assert magic == 2049, f"{stem}: bad magic {magic}"
        labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
        counts = np.bincount(labels, minlength=10).tolist()
        expected = OFFICIAL_LABEL_COUNTS[stem]
        assert counts == expected, f"{stem}: label histogram {counts}"


def main():
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    src_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    for stem in STEMS:
        raw = read_raw(src_dir, stem)
        validate(stem, raw)
        # mtime=0 keeps output byte-identical across rebuilds
        with gzip.GzipFile(filename=out_dir / f"{stem}.gz", mode="wb",
                           mtime=0) as f:
            f.write(raw)
        print(f"wrote {out_dir / stem}.gz ({len(raw)} bytes raw)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
