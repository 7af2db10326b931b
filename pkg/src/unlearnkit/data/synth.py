"""Synthetic class-template images for fast end-to-end runs."""

from __future__ import annotations

import numpy as np

from unlearnkit.data.dataset import Dataset

NOISE_SIGMA = 0.1
LOW, HIGH = 0.2, 0.8
MIN_TEMPLATE_DISTANCE = 0.25
_TEMPLATE_SEED = 0x5EEDB10B


def class_templates(num_classes: int, image_side: int, channels: int = 1) -> np.ndarray:
    """Binary LOW/HIGH templates, one per class, pairwise differing in >= 25% of pixels.

    Templates depend only on the shape arguments, never on the sample seed,
    so train and test sets drawn with different seeds share them.
    """
    rng = np.random.default_rng([_TEMPLATE_SEED, num_classes, image_side, channels])
    shape = (channels, image_side, image_side)
    size = int(np.prod(shape))
    bits: list[np.ndarray] = []
    while len(bits) < num_classes:
        cand = rng.random(size) < 0.5
        if all(np.mean(cand != b) >= MIN_TEMPLATE_DISTANCE for b in bits):
            bits.append(cand)
    return np.where(np.stack(bits), HIGH, LOW).reshape(num_classes, *shape)


def synth_blobs(
    num_classes: int,
    per_class: int,
    image_side: int,
    seed: int,
    channels: int = 1,
    name: str = "synth",
) -> Dataset:
    """Gaussian noise (sigma 0.1, clipped to [0, 1]) around each class template, samples shuffled."""
    if num_classes < 1 or per_class < 1 or image_side < 1 or channels < 1:
        raise ValueError("synth_blobs sizes must be positive")
    templates = class_templates(num_classes, image_side, channels)
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.normal(0.0, NOISE_SIGMA, size=(labels.size, *templates.shape[1:]))
    images = np.clip(templates[labels] + noise, 0.0, 1.0)
    order = rng.permutation(labels.size)
    return Dataset(images[order], labels[order], num_classes, name)
