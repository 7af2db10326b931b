"""Central finite-difference check of the analytic backward pass."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from unlearnkit.nn.network import Network

# loss_fn(logits) -> (value, dvalue/dlogits)
LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def grad_check(net: Network, batch: np.ndarray, loss_fn: LossFn, h: float = 1e-5) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    The relative error of each entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    Every parameter entry is perturbed, so keep the network small.
    """
    logits = net.forward(batch, train=True)
    _, dlogits = loss_fn(logits)
    net.backward(dlogits)
    worst = 0.0
    for _, p in net.named_params():
        analytic = p.grad.copy()
        flat = p.value.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(net.forward(batch))[0]
            flat[i] = orig - h
            down = loss_fn(net.forward(batch))[0]
            flat[i] = orig
            numeric[i] = (up - down) / (2 * h)
        a = analytic.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - numeric) / denom)))
    net.zero_grad()
    return worst
