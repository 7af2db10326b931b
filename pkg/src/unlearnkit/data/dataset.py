"""Dataset container, forget/remain partitioning and mini-batch iteration."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np

from unlearnkit.errors import DataFormatError


@dataclass
class AccessLog:
    """Counts how often a dataset's samples were handed out."""

    batches: int = 0
    samples: int = 0

    def record(self, n: int) -> None:
        self.batches += 1
        self.samples += n


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable labeled image collection.

    ``images`` is float64 (N, C, H, W) in [0, 1]; ``labels`` is int64 (N,).
    ``indices`` maps each sample back to its position in the dataset it was
    split from, so partitions can be checked against the original.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    indices: np.ndarray | None = None
    access: AccessLog = field(default_factory=AccessLog, repr=False)

    def __post_init__(self) -> None:
        images = np.array(self.images, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 4:
            raise DataFormatError(f"{self.name}: images must be (N, C, H, W), got shape {images.shape}")
        if images.shape[0] != labels.shape[0]:
            raise DataFormatError(f"{self.name}: {images.shape[0]} images but {labels.shape[0]} labels")
        if self.num_classes < 1:
            raise DataFormatError(f"{self.name}: num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataFormatError(
                f"{self.name}: labels must lie in [0, {self.num_classes}), got [{labels.min()}, {labels.max()}]"
            )
        if images.size and (images.min() < 0.0 or images.max() > 1.0 or not np.isfinite(images).all()):
            raise DataFormatError(f"{self.name}: pixel values must lie in [0, 1]")
        idx = np.arange(labels.size, dtype=np.int64) if self.indices is None else np.array(self.indices, dtype=np.int64)
        if idx.shape != labels.shape:
            raise DataFormatError(f"{self.name}: indices length {idx.size} does not match {labels.size} samples")
        for arr in (images, labels, idx):
            arr.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, positions, name: str | None = None) -> "Dataset":
        """New dataset holding the samples at ``positions`` (with a fresh access log)."""
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            self.images[positions],
            self.labels[positions],
            self.num_classes,
            name or self.name,
            self.indices[positions],
        )

    def head(self, n: int, name: str | None = None) -> "Dataset":
        return self.subset(np.arange(min(n, len(self))), name)


@dataclass(frozen=True)
class ForgetSpec:
    """Which training samples to forget: whole classes, or a seeded random fraction."""

    mode: str
    classes: tuple[int, ...] = ()
    fraction: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode == "class":
            if not self.classes:
                raise ValueError("by-class forget spec needs at least one class")
            object.__setattr__(self, "classes", tuple(sorted({int(c) for c in self.classes})))
            if min(self.classes) < 0:
                raise ValueError(f"negative class id in {self.classes}")
        elif self.mode == "fraction":
            if self.fraction is None or not 0 < self.fraction < 1:
                raise ValueError(f"forget fraction must lie in (0, 1), got {self.fraction}")
        else:
            raise ValueError(f"unknown forget mode {self.mode!r} (expected 'class' or 'fraction')")

    @classmethod
    def by_class(cls, classes: Iterable[int]) -> "ForgetSpec":
        return cls("class", tuple(classes))

    @classmethod
    def by_fraction(cls, fraction: float, seed: int = 0) -> "ForgetSpec":
        return cls("fraction", fraction=fraction, seed=seed)


@dataclass(frozen=True)
class ForgetPartition:
    forget: Dataset
    remain: Dataset


def partition_forget(ds: Dataset, spec: ForgetSpec) -> ForgetPartition:
    """Split ``ds`` into the forget set and the remaining set; both keep original order."""
    n = len(ds)
    if spec.mode == "class":
        bad = [c for c in spec.classes if c >= ds.num_classes]
        if bad:
            raise ValueError(f"class ids {bad} out of range for {ds.num_classes} classes")
        mask = np.isin(ds.labels, spec.classes)
    else:
        k = int(round(spec.fraction * n))
        rng = np.random.default_rng(spec.seed)
        mask = np.zeros(n, dtype=bool)
        mask[rng.choice(n, size=k, replace=False)] = True
    if not mask.any():
        raise ValueError(f"forget set is empty for {spec}")
    if mask.all():
        raise ValueError(f"forget spec {spec} would leave no remaining data")
    forget = ds.subset(np.flatnonzero(mask), f"{ds.name}/forget")
    remain = ds.subset(np.flatnonzero(~mask), f"{ds.name}/remain")
    return ForgetPartition(forget, remain)


def epoch_order(n: int, shuffle: bool, seed: int, epoch: int = 0) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(epoch)])
    return rng.permutation(n)


def batch_iter(
    ds: Dataset, batch_size: int, shuffle: bool = False, seed: int = 0, epoch: int = 0
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images, labels)`` batches covering every sample once; the last batch may be short.

    The shuffled order depends only on ``(seed, epoch)``.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = epoch_order(len(ds), shuffle, seed, epoch)
    for start in range(0, len(order), batch_size):
        sel = order[start : start + batch_size]
        ds.access.record(sel.size)
        yield ds.images[sel], ds.labels[sel]
