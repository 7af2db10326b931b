"""Layer implementations for the fixed-sequence network.

Every tensor is a float64 ``numpy.ndarray`` laid out as (batch, channels,
height, width) for image activations and (batch, features) after
``Flatten``.  Layers keep their own activation cache between ``forward``
and ``backward``; the cache is dropped once the backward pass consumes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from unlearnkit.errors import ShapeError, StateError

DTYPE = np.float64


@dataclass
class Param:
    """A trainable tensor and its gradient buffer (``None`` when absent)."""

    value: np.ndarray
    grad: np.ndarray | None = None

    def copy(self) -> "Param":
        return Param(self.value.copy(), None if self.grad is None else self.grad.copy())


class Layer:
    kind: str = "layer"

    def __init__(self) -> None:
        self.input_shape: tuple[int, ...] | None = None
        self.output_shape: tuple[int, ...] | None = None
        self.params: dict[str, Param] = {}
        self._cache = None

    def build(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Bind the per-sample input shape and return the per-sample output shape."""
        self.input_shape = tuple(input_shape)
        self.output_shape = self._output_shape(self.input_shape)
        return self.output_shape

    def _output_shape(self, input_shape):
        return input_shape

    # parameter shapes and fan-in are only meaningful for layers with weights
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def fan_in(self) -> int:
        return 0

    def config(self) -> tuple[int, ...]:
        """Integer fields that identify the layer in a checkpoint header."""
        return ()

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def clear_cache(self) -> None:
        self._cache = None

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called without a cached forward pass")
        cached, self._cache = self._cache, None
        return cached

    def __repr__(self) -> str:
        args = ", ".join(str(v) for v in self.config())
        return f"{type(self).__name__}({args})"


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, out_channels: int, kernel: int = 3, stride: int = 1, padding: int = 0) -> None:
        super().__init__()
        if out_channels < 1 or kernel < 1 or stride < 1 or padding < 0:
            raise ShapeError(
                f"invalid Conv2d(out_channels={out_channels}, kernel={kernel}, "
                f"stride={stride}, padding={padding})"
            )
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding

    def _output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"Conv2d expects (C, H, W) input, got {input_shape}")
        c, h, w = input_shape
        k, s, p = self.kernel, self.stride, self.padding
        if h + 2 * p < k or w + 2 * p < k:
            raise ShapeError(f"Conv2d kernel {k} larger than padded input {input_shape}")
        return (self.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)

    def param_shapes(self):
        c = self.input_shape[0]
        return {"weight": (self.out_channels, c, self.kernel, self.kernel), "bias": (self.out_channels,)}

    def fan_in(self):
        return self.input_shape[0] * self.kernel * self.kernel

    def config(self):
        return (self.out_channels, self.kernel, self.stride, self.padding)

    def _slices(self):
        _, ho, wo = self.output_shape
        s = self.stride
        for i in range(self.kernel):
            for j in range(self.kernel):
                yield i, j, (slice(None), slice(None), slice(i, i + (ho - 1) * s + 1, s), slice(j, j + (wo - 1) * s + 1, s))

    def _im2col(self, x):
        p = self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        bsz, c = x.shape[:2]
        _, ho, wo = self.output_shape
        cols = np.empty((bsz, ho, wo, c, self.kernel, self.kernel), dtype=DTYPE)
        for i, j, sl in self._slices():
            cols[..., i, j] = x[sl].transpose(0, 2, 3, 1)
        return x.shape, cols.reshape(bsz * ho * wo, -1)

    def forward(self, x, cache=False):
        padded_shape, cols = self._im2col(x)
        w = self.params["weight"].value
        _, ho, wo = self.output_shape
        out = cols @ w.reshape(self.out_channels, -1).T + self.params["bias"].value
        if cache:
            self._cache = (padded_shape, cols)
        return np.ascontiguousarray(out.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2))

    def backward(self, dout):
        padded_shape, cols = self._take_cache()
        w = self.params["weight"]
        b = self.params["bias"]
        bsz, c = padded_shape[:2]
        _, ho, wo = self.output_shape
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        w.grad = (d2.T @ cols).reshape(w.value.shape)
        b.grad = d2.sum(axis=0)
        dcols = (d2 @ w.value.reshape(self.out_channels, -1)).reshape(bsz, ho, wo, c, self.kernel, self.kernel)
        dx = np.zeros(padded_shape, dtype=DTYPE)
        for i, j, sl in self._slices():
            dx[sl] += dcols[..., i, j].transpose(0, 3, 1, 2)
        p = self.padding
        if p:
            dx = dx[:, :, p:-p, p:-p]
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, cache=False):
        mask = x > 0
        if cache:
            self._cache = mask
        return np.where(mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._take_cache(), dout, 0.0)


class MaxPool2d(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.

    Gradient goes to the first maximal entry of each window (row-major).
    """

    kind = "maxpool2d"

    def __init__(self, size: int = 2) -> None:
        super().__init__()
        if size < 1:
            raise ShapeError(f"invalid MaxPool2d size {size}")
        self.size = size

    def _output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"MaxPool2d expects (C, H, W) input, got {input_shape}")
        c, h, w = input_shape
        if h < self.size or w < self.size:
            raise ShapeError(f"MaxPool2d size {self.size} larger than input {input_shape}")
        return (c, h // self.size, w // self.size)

    def config(self):
        return (self.size,)

    def _offsets(self):
        s = self.size
        _, ho, wo = self.output_shape
        for i in range(s):
            for j in range(s):
                yield (slice(None), slice(None), slice(i, i + ho * s, s), slice(j, j + wo * s, s))

    def forward(self, x, cache=False):
        out = None
        arg = None
        for k, sl in enumerate(self._offsets()):
            cand = x[sl]
            if out is None:
                out = cand.copy()
                arg = np.zeros(out.shape, dtype=np.int32)
            else:
                better = cand > out  # strict: ties keep the earlier entry
                out = np.where(better, cand, out)
                arg[better] = k
        if cache:
            self._cache = (x.shape, arg)
        return out

    def backward(self, dout):
        in_shape, arg = self._take_cache()
        dx = np.zeros(in_shape, dtype=DTYPE)
        for k, sl in enumerate(self._offsets()):
            dx[sl] = np.where(arg == k, dout, 0.0)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def _output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, cache=False):
        if cache:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._take_cache())


class Linear(Layer):
    kind = "linear"

    def __init__(self, out_features: int) -> None:
        super().__init__()
        if out_features < 1:
            raise ShapeError(f"invalid Linear out_features {out_features}")
        self.out_features = out_features

    def _output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ShapeError(f"Linear expects flat input, got {input_shape}; add a Flatten layer")
        return (self.out_features,)

    def param_shapes(self):
        return {"weight": (self.out_features, self.input_shape[0]), "bias": (self.out_features,)}

    def fan_in(self):
        return self.input_shape[0]

    def config(self):
        return (self.out_features,)

    def forward(self, x, cache=False):
        if cache:
            self._cache = x
        return x @ self.params["weight"].value.T + self.params["bias"].value

    def backward(self, dout):
        x = self._take_cache()
        w = self.params["weight"]
        w.grad = dout.T @ x
        self.params["bias"].grad = dout.sum(axis=0)
        return dout @ w.value


LAYER_KINDS: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Conv2d, ReLU, MaxPool2d, Flatten, Linear)
}
LAYER_CODES: dict[str, int] = {"conv2d": 1, "relu": 2, "maxpool2d": 3, "flatten": 4, "linear": 5}
