"""Sequential network container, the reference architecture, and initialization."""

from __future__ import annotations

import copy
from collections.abc import Iterator, Sequence

import numpy as np

from unlearnkit.errors import NonFiniteError, ShapeError, StateError
from unlearnkit.nn.layers import DTYPE, Conv2d, Flatten, Layer, Linear, MaxPool2d, Param, ReLU

REFERENCE_CHANNELS = (8, 16)
REFERENCE_KERNEL = 3
REFERENCE_PADDING = 1
REFERENCE_POOL = 2


class Network:
    """An ordered layer sequence bound to a per-sample input shape.

    Parameters stay unallocated until :func:`init_random` (or a checkpoint
    load) fills them.  A frozen network refuses to cache activations or hold
    gradient buffers, which is how teacher models are kept read-only.
    """

    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int], num_classes: int) -> None:
        if num_classes < 2:
            raise ShapeError(f"num_classes must be >= 2, got {num_classes}")
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.num_classes = int(num_classes)
        self.frozen = False
        self.forward_count = 0
        shape = self.input_shape
        for k, layer in enumerate(self.layers):
            try:
                shape = layer.build(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {k} ({layer!r}): {exc}") from None
        if shape != (self.num_classes,):
            raise ShapeError(f"final output shape {shape} does not match num_classes={num_classes}")

    @property
    def initialized(self) -> bool:
        return all(
            set(layer.params) == set(layer.param_shapes()) for layer in self.layers
        )

    def named_params(self) -> Iterator[tuple[str, Param]]:
        for k, layer in enumerate(self.layers):
            for name in layer.param_shapes():
                if name in layer.params:
                    yield f"{k}.{name}", layer.params[name]

    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for layer in self.layers for shape in layer.param_shapes().values())

    def architecture(self) -> tuple:
        """Hashable description used to compare architectures."""
        return (
            self.input_shape,
            self.num_classes,
            tuple((layer.kind, layer.config()) for layer in self.layers),
        )

    def freeze(self) -> "Network":
        self.frozen = True
        for layer in self.layers:
            layer.clear_cache()
            for p in layer.params.values():
                p.grad = None
        return self

    def forward(self, batch: np.ndarray, train: bool = False) -> np.ndarray:
        """Return logits of shape (B, num_classes).

        With ``train=True`` every layer caches what its backward pass needs.
        """
        if not self.initialized:
            raise StateError("network parameters are not initialized")
        if train and self.frozen:
            raise StateError("frozen network cannot run a training forward pass")
        x = np.asarray(batch, dtype=DTYPE)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(f"batch shape {x.shape} does not match network input (B, {self.input_shape})")
        self.forward_count += 1
        for k, layer in enumerate(self.layers):
            x = layer.forward(x, cache=train)
            if not np.isfinite(x).all():
                for later in self.layers:
                    later.clear_cache()
                raise NonFiniteError(f"non-finite output in layer {k} ({layer!r})")
        return x

    __call__ = forward

    def backward(self, dlogits: np.ndarray) -> None:
        """Backpropagate ``dL/dlogits`` and overwrite every parameter's grad buffer."""
        if self.frozen:
            raise StateError("frozen network has no gradient buffers")
        g = np.asarray(dlogits, dtype=DTYPE)
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            if p.grad is not None:
                p.grad.fill(0.0)

    def __repr__(self) -> str:
        body = " -> ".join(repr(layer) for layer in self.layers)
        return f"Network(input={self.input_shape}, {body})"


def build_model(
    input_shape: Sequence[int],
    num_classes: int,
    channels: Sequence[int] = REFERENCE_CHANNELS,
    kernel: int = REFERENCE_KERNEL,
    padding: int = REFERENCE_PADDING,
    pool: int = REFERENCE_POOL,
) -> Network:
    """Conv-ReLU-MaxPool blocks (one per entry of ``channels``) and a linear head."""
    layers: list[Layer] = []
    for ch in channels:
        layers += [Conv2d(ch, kernel, 1, padding), ReLU(), MaxPool2d(pool)]
    layers += [Flatten(), Linear(num_classes)]
    return Network(layers, input_shape, num_classes)


def build_reference_model(input_shape: Sequence[int], num_classes: int) -> Network:
    """Two 3x3 conv blocks (8 and 16 channels) followed by one fully connected layer.

    Accepts 1- or 3-channel square 28x28 or 32x32 images.
    """
    if len(input_shape) != 3:
        raise ShapeError(f"input_shape must be (channels, height, width), got {tuple(input_shape)}")
    c, h, w = input_shape
    if c not in (1, 3) or h != w or h not in (28, 32):
        raise ShapeError(
            f"unsupported input shape {tuple(input_shape)}: need channels in {{1, 3}} "
            "and a square 28x28 or 32x32 image"
        )
    if num_classes < 2:
        raise ShapeError(f"num_classes must be >= 2, got {num_classes}")
    return build_model(input_shape, num_classes)


def blank_like(net: Network) -> Network:
    """Same architecture as ``net`` with no parameters allocated."""
    layers = []
    for layer in net.layers:
        fresh = copy.copy(layer)
        fresh.params = {}
        fresh._cache = None
        layers.append(fresh)
    return Network(layers, net.input_shape, net.num_classes)


def init_random(net: Network, seed: int) -> Network:
    """Fill every weight from U(-b, b), b = sqrt(1 / fan_in); biases are zero.

    Draws happen layer by layer from a single PCG64 stream, so the result is
    a pure function of the architecture and ``seed``.
    """
    rng = np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    for layer in net.layers:
        shapes = layer.param_shapes()
        if not shapes:
            continue
        bound = np.sqrt(1.0 / layer.fan_in())
        layer.params = {
            "weight": Param(rng.uniform(-bound, bound, size=shapes["weight"]).astype(DTYPE)),
            "bias": Param(np.zeros(shapes["bias"], dtype=DTYPE)),
        }
    net.forward_count = 0
    return net


def clone_params(src: Network) -> Network:
    """Deep copy of ``src``; the clone is trainable even if ``src`` is frozen."""
    if not src.initialized:
        raise StateError("cannot clone an uninitialized network")
    dst = blank_like(src)
    for mine, theirs in zip(dst.layers, src.layers):
        mine.params = {name: Param(p.value.copy()) for name, p in theirs.params.items()}
    return dst
