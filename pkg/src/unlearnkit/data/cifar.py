"""CIFAR-10 binary batches: 3073-byte records of one label byte and 3072 pixel bytes.

Pixels are stored as three 32x32 row-major planes, red then green then blue.
"""

from __future__ import annotations

import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from unlearnkit.data.dataset import Dataset
from unlearnkit.errors import DataFormatError

RECORD = 3073
SIDE = 32
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)
CLASS_NAMES = ("airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck")


def parse_cifar10(raw: bytes, source: str = "<bytes>") -> tuple[np.ndarray, np.ndarray]:
    if len(raw) == 0 or len(raw) % RECORD:
        raise DataFormatError(f"{source}: size {len(raw)} is not a positive multiple of {RECORD}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD)
    labels = rec[:, 0]
    if labels.max() > 9:
        bad = int(np.flatnonzero(labels > 9)[0])
        raise DataFormatError(f"{source}: record {bad} has label byte {labels[bad]} > 9")
    return rec[:, 1:].reshape(-1, 3, SIDE, SIDE), labels


def load_cifar10(batch_paths: Sequence[str | os.PathLike], name: str = "cifar10") -> Dataset:
    """Concatenate CIFAR-10 binary batch files into one dataset (all files parsed before any is used)."""
    if not batch_paths:
        raise ValueError("no CIFAR-10 batch files given")
    images, labels = [], []
    for path in batch_paths:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no such file: {path}")
        img, lab = parse_cifar10(path.read_bytes(), str(path))
        images.append(img)
        labels.append(lab)
    pixels = np.concatenate(images).astype(np.float64) / 255.0
    return Dataset(pixels, np.concatenate(labels).astype(np.int64), 10, name)


def encode_cifar10(images: np.ndarray, labels: np.ndarray) -> bytes:
    images = np.asarray(images)
    if images.shape[1:] != (3, SIDE, SIDE):
        raise ValueError(f"CIFAR-10 records need (N, 3, 32, 32) images, got {images.shape}")
    if images.dtype != np.uint8:
        images = np.rint(images * 255.0).astype(np.uint8)
    rec = np.empty((images.shape[0], RECORD), dtype=np.uint8)
    rec[:, 0] = labels
    rec[:, 1:] = images.reshape(images.shape[0], -1)
    return rec.tobytes()


def find_batches(root: str | os.PathLike, split: str = "train") -> list[Path]:
    root = Path(root)
    if (root / "cifar-10-batches-bin").is_dir():
        root = root / "cifar-10-batches-bin"
    names = TRAIN_FILES if split == "train" else TEST_FILES
    paths = [root / n for n in names]
    for p in paths:
        if not p.exists():
            raise FileNotFoundError(f"missing {p}")
    return paths
