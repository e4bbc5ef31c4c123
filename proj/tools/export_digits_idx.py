#!/usr/bin/env python3
"""Export the UCI handwritten-digits dataset (bundled with scikit-learn) as
IDX image/label files under data/digits/.

The 8x8 images carry 17 gray levels (0..16); they are rescaled to bytes via
round(v * 255 / 16). The train/test split is a fixed seeded permutation so
the files are reproducible byte for byte.
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx_images(path: Path, images: np.ndarray) -> None:
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def main() -> int:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "data/digits")
    out_dir.mkdir(parents=True, exist_ok=True)

    bunch = load_digits()
    images = np.rint(bunch.images * 255.0 / 16.0).astype(np.uint8)
    labels = bunch.target.astype(np.uint8)

    order = np.random.RandomState(0).permutation(len(labels))
    images, labels = images[order], labels[order]
    n_test = 360
    split = len(labels) - n_test

    write_idx_images(out_dir / "train-images.idx3-ubyte", images[:split])
    write_idx_labels(out_dir / "train-labels.idx1-ubyte", labels[:split])
    write_idx_images(out_dir / "test-images.idx3-ubyte", images[split:])
    write_idx_labels(out_dir / "test-labels.idx1-ubyte", labels[split:])
    print(f"wrote {split} train / {n_test} test digits to {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
