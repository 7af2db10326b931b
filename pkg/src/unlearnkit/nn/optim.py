"""SGD with momentum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from unlearnkit.errors import StateError
from unlearnkit.nn.network import Network


@dataclass
class SGD:
    """Heavy-ball SGD: ``v <- momentum * v + g``; ``p <- p - lr * v``.

    Velocity buffers are created lazily on the first step, keyed by the
    parameter's name in the network (``"<layer index>.<weight|bias>"``).
    """

    learning_rate: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    def step(self, net: Network) -> Network:
        params = list(net.named_params())
        missing = [name for name, p in params if p.grad is None]
        if missing:
            raise StateError(f"no gradient for {', '.join(missing)}; run backward first")
        for name, p in params:
            v = self.velocity.get(name)
            if v is None:
                v = self.velocity[name] = np.zeros_like(p.value)
            elif v.shape != p.value.shape:
                raise StateError(f"velocity for {name} has shape {v.shape}, parameter has {p.value.shape}")
            v *= self.momentum
            v += p.grad
            p.value -= self.learning_rate * v
            p.grad.fill(0.0)
        return net


def sgd_step(net: Network, state: SGD) -> Network:
    return state.step(net)
