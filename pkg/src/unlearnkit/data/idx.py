"""IDX (MNIST / Fashion-MNIST) reader and writer.

Big-endian layout: u32 magic, one u32 per dimension, then unsigned bytes.
Images use magic 0x00000803 (N, rows, cols); labels use 0x00000801 (N,).
Gzip-compressed files are accepted transparently.
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

from unlearnkit.data.dataset import Dataset
from unlearnkit.errors import DataFormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _read_bytes(path: str | os.PathLike) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: corrupt gzip stream ({exc})") from None
    return raw


def parse_idx(raw: bytes, magic: int, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 4:
        raise DataFormatError(f"{source}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        kind = {IMAGE_MAGIC: "images", LABEL_MAGIC: "labels"}.get(found, "unknown")
        raise DataFormatError(
            f"{source}: magic 0x{found:08x} ({kind}), expected 0x{magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{source}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = int(np.prod(dims))
    have = len(raw) - header
    if have != need:
        raise DataFormatError(f"{source}: payload has {have} bytes, dims {dims} need {need}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(
    images_path: str | os.PathLike,
    labels_path: str | os.PathLike,
    num_classes: int = 10,
    name: str | None = None,
) -> Dataset:
    images = parse_idx(_read_bytes(images_path), IMAGE_MAGIC, str(images_path))
    labels = parse_idx(_read_bytes(labels_path), LABEL_MAGIC, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        )
    if labels.size and labels.max() >= num_classes:
        raise DataFormatError(f"{labels_path}: label {labels.max()} >= num_classes {num_classes}")
    pixels = images[:, None, :, :].astype(np.float64) / 255.0
    return Dataset(pixels, labels.astype(np.int64), num_classes, name or Path(images_path).name)


def encode_idx(array: np.ndarray, magic: int) -> bytes:
    array = np.asarray(array)
    if array.ndim != (magic & 0xFF):
        raise ValueError(f"array of rank {array.ndim} does not fit magic 0x{magic:08x}")
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + array.astype(np.uint8).tobytes()


def to_bytes(images: np.ndarray) -> np.ndarray:
    """Map [0, 1] pixels back to the uint8 grid (exact for data loaded from bytes)."""
    return np.rint(np.asarray(images) * 255.0).astype(np.uint8)


def write_idx(ds: Dataset, images_path: str | os.PathLike, labels_path: str | os.PathLike, compress: bool = False) -> None:
    """Export a single-channel dataset as an IDX image/label pair."""
    if ds.images.shape[1] != 1:
        raise ValueError(f"IDX export needs single-channel images, got {ds.images.shape[1]} channels")
    if ds.num_classes > 256:
        raise ValueError("IDX labels are single bytes")
    img = encode_idx(to_bytes(ds.images[:, 0]), IMAGE_MAGIC)
    lab = encode_idx(ds.labels, LABEL_MAGIC)
    for path, blob in ((images_path, img), (labels_path, lab)):
        Path(path).write_bytes(gzip.compress(blob, mtime=0) if compress else blob)


def find_idx_pair(root: str | os.PathLike, split: str) -> tuple[Path, Path]:
    """Locate the standard MNIST-style file names (optionally ``.gz``) under ``root``."""
    root = Path(root)
    found = []
    for stem in MNIST_FILES[split]:
        for candidate in (root / stem, root / f"{stem}.gz"):
            if candidate.exists():
                found.append(candidate)
                break
        else:
            raise FileNotFoundError(f"missing {root / stem} (or {stem}.gz)")
    return found[0], found[1]


def load_mnist(root: str | os.PathLike, split: str = "train", name: str = "mnist") -> Dataset:
    images, labels = find_idx_pair(root, split)
    return load_idx(images, labels, 10, f"{name}-{split}")
