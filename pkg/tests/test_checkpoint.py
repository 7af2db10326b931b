import struct

import numpy as np
import pytest

from unlearnkit.errors import CheckpointError, StateError
from unlearnkit.nn import build_model, build_reference_model, init_random, load_checkpoint, save_checkpoint
from unlearnkit.nn.checkpoint import decode, encode


@pytest.fixture
def ref_net():
    return init_random(build_reference_model((1, 28, 28), 10), 3)


def test_round_trip_forward_bitwise(ref_net, tmp_path, rng):
    path = save_checkpoint(ref_net, tmp_path / "m.unlf")
    loaded = load_checkpoint(path)
    x = rng.random((4, 1, 28, 28))
    assert ref_net.forward(x).tobytes() == loaded.forward(x).tobytes()
    assert loaded.architecture() == ref_net.architecture()


def test_round_trip_bytes_stable(ref_net):
    assert encode(decode(encode(ref_net))) == encode(ref_net)


def test_header_layout(ref_net):
    data = encode(ref_net)
    assert data[:4] == b"UNLF"
    assert struct.unpack_from("<I", data, 4) == (1,)
    assert struct.unpack_from("<I4I", data, 8) == (3, 1, 28, 28, 10)
    # file ends with exactly num_params little-endian float64 values
    n = ref_net.num_params()
    assert struct.unpack_from("<Q", data, len(data) - 8 * n - 8) == (n,)
    first = next(ref_net.named_params())[1].value.ravel()[0]
    assert struct.unpack_from("<d", data, len(data) - 8 * n) == (first,)


def test_wrong_architecture(ref_net, tmp_path):
    path = save_checkpoint(ref_net, tmp_path / "m.unlf")
    with pytest.raises(CheckpointError, match="architecture"):
        load_checkpoint(path, expect=build_reference_model((3, 32, 32), 10))
    with pytest.raises(CheckpointError, match="architecture"):
        load_checkpoint(path, expect=build_model((1, 28, 28), 10, channels=(4, 16)))


@pytest.mark.parametrize("cut", [1, 8, 100])
def test_truncated(ref_net, tmp_path, cut):
    path = tmp_path / "t.unlf"
    path.write_bytes(encode(ref_net)[:-cut])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_truncated_header(ref_net):
    with pytest.raises(CheckpointError, match="layer"):
        decode(encode(ref_net)[:30])


def test_trailing_bytes(ref_net):
    with pytest.raises(CheckpointError, match="trailing"):
        decode(encode(ref_net) + b"\0")


def test_bad_magic_and_version(ref_net):
    data = encode(ref_net)
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError, match="version"):
        decode(data[:4] + struct.pack("<I", 9) + data[8:])


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.unlf")


def test_uninitialized(tmp_path):
    with pytest.raises(StateError):
        save_checkpoint(build_reference_model((1, 28, 28), 10), tmp_path / "x.unlf")


def test_overwrite_is_atomic(ref_net, tmp_path):
    path = tmp_path / "m.unlf"
    save_checkpoint(ref_net, path)
    other = init_random(build_reference_model((1, 28, 28), 10), 4)
    save_checkpoint(other, path)
    assert load_checkpoint(path).layers[0].params["weight"].value.tobytes() == other.layers[0].params["weight"].value.tobytes()
    assert [p.name for p in tmp_path.iterdir()] == ["m.unlf"]


def test_nan_values_survive(tmp_path):
    net = init_random(build_model((1, 4, 4), 3, channels=(2, 2)), 0)
    net.layers[0].params["bias"].value[0] = np.nan
    loaded = decode(encode(net))
    assert np.isnan(loaded.layers[0].params["bias"].value[0])
