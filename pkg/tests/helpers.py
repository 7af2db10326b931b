"""Shared test utilities: loss selectors for the gradient checker."""

import numpy as np

from unlearnkit.nn import build_model, cross_entropy, distill_kl, init_random, softmax_with_temperature


def random_small_net(seed, num_classes=3):
    """Reference architecture scaled down: 2 conv channels per block on a 4x4 input."""
    return init_random(build_model((1, 4, 4), num_classes, channels=(2, 2)), seed)


def loss_selectors(seed, batch=3, num_classes=3, tau=2.0, alpha=0.5):
    """CE, KL-to-fixed-teacher and combined losses as ``logits -> (value, grad)``."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=batch)
    teacher = softmax_with_temperature(rng.normal(size=(batch, num_classes)) * 2, tau)

    def ce(z):
        return cross_entropy(z, labels, return_grad=True)

    def kl(z):
        return distill_kl(teacher, z, tau, return_grad=True)

    def combined(z):
        c, gc = ce(z)
        k, gk = kl(z)
        return c + alpha * k, gc + alpha * gk

    return {"ce": ce, "kl": kl, "combined": combined}


def random_batch(seed, batch=3):
    return np.random.default_rng(seed + 10_000).normal(size=(batch, 1, 4, 4))
