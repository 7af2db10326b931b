"""Binary checkpoint format.

All integers and floats are little-endian::

    magic        4 bytes   b"UNLF"
    version      u32       1
    input_ndim   u32       followed by input_ndim u32 dimensions
    num_classes  u32
    layer_count  u32
    layer record (layer_count times):
        length   u32       byte length of the payload that follows
        kind     u8        1 conv2d, 2 relu, 3 maxpool2d, 4 flatten, 5 linear
        fields   u32 * k   conv2d: out_channels, kernel, stride, padding
                           maxpool2d: size; linear: out_features; others: none
    param_count  u64       total number of float64 values that follow
    values       f64 * param_count, layer order, weight before bias, C order

Nothing may follow the parameter block.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from unlearnkit.errors import CheckpointError, StateError
from unlearnkit.nn.layers import DTYPE, LAYER_CODES, LAYER_KINDS, Param
from unlearnkit.nn.network import Network

MAGIC = b"UNLF"
VERSION = 1
_KIND_BY_CODE = {code: kind for kind, code in LAYER_CODES.items()}
_FIELD_COUNT = {"conv2d": 4, "relu": 0, "maxpool2d": 1, "flatten": 0, "linear": 1}


def encode(net: Network) -> bytes:
    if not net.initialized:
        raise StateError("cannot checkpoint an uninitialized network")
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(net.input_shape))]
    out.append(struct.pack(f"<{len(net.input_shape)}I", *net.input_shape))
    out.append(struct.pack("<II", net.num_classes, len(net.layers)))
    for layer in net.layers:
        fields = layer.config()
        payload = struct.pack("<B", LAYER_CODES[layer.kind]) + struct.pack(f"<{len(fields)}I", *fields)
        out.append(struct.pack("<I", len(payload)) + payload)
    values = [p.value.astype("<f8", copy=False).ravel() for _, p in net.named_params()]
    flat = np.concatenate(values) if values else np.zeros(0, dtype="<f8")
    out.append(struct.pack("<Q", flat.size))
    out.append(flat.astype("<f8").tobytes())
    return b"".join(out)


def save_checkpoint(net: Network, path: str | os.PathLike) -> Path:
    """Write ``net`` atomically to ``path``."""
    path = Path(path)
    data = encode(net)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, fmt: str, field: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {field} at byte {self.pos}")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals


def decode(data: bytes, expect: Network | None = None) -> Network:
    r = _Reader(data)
    (magic,) = r.take("<4s", "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.take("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}, expected {VERSION}")
    (ndim,) = r.take("<I", "input_ndim")
    if not 1 <= ndim <= 8:
        raise CheckpointError(f"implausible input_ndim {ndim}")
    input_shape = r.take(f"<{ndim}I", "input_shape")
    num_classes, count = r.take("<II", "num_classes/layer_count")
    layers = []
    for k in range(count):
        (length,) = r.take("<I", f"layer[{k}].length")
        (code,) = r.take("<B", f"layer[{k}].kind")
        kind = _KIND_BY_CODE.get(code)
        if kind is None:
            raise CheckpointError(f"layer[{k}].kind: unknown layer code {code}")
        nfields = _FIELD_COUNT[kind]
        if length != 1 + 4 * nfields:
            raise CheckpointError(f"layer[{k}].length: {length} does not fit a {kind} record")
        fields = r.take(f"<{nfields}I", f"layer[{k}].fields")
        try:
            layers.append(LAYER_KINDS[kind](*fields))
        except ValueError as exc:
            raise CheckpointError(f"layer[{k}].fields: {exc}") from None
    try:
        net = Network(layers, input_shape, num_classes)
    except ValueError as exc:
        raise CheckpointError(f"architecture: {exc}") from None
    if expect is not None and net.architecture() != expect.architecture():
        raise CheckpointError(
            f"architecture: checkpoint holds {net!r}, expected {expect!r}"
        )
    (total,) = r.take("<Q", "param_count")
    if total != net.num_params():
        raise CheckpointError(f"param_count: header says {total}, architecture needs {net.num_params()}")
    remaining = len(data) - r.pos
    if remaining != 8 * total:
        kind = "truncated" if remaining < 8 * total else "trailing bytes in"
        raise CheckpointError(f"values: {kind} parameter block ({remaining} bytes, need {8 * total})")
    flat = np.frombuffer(data, dtype="<f8", count=total, offset=r.pos).astype(DTYPE)
    offset = 0
    for layer in net.layers:
        params = {}
        for name, shape in layer.param_shapes().items():
            size = int(np.prod(shape))
            params[name] = Param(flat[offset : offset + size].reshape(shape).copy())
            offset += size
        layer.params = params
    return net


def load_checkpoint(path: str | os.PathLike, expect: Network | None = None) -> Network:
    """Read a checkpoint; with ``expect`` the stored architecture must match it."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    try:
        return decode(data, expect)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
