"""Binary parameter checkpoints."""

import struct

import numpy as np
import pytest

from nlrelu import presets
from nlrelu.activations import ActivationSpec
from nlrelu.network import build, load_checkpoint, save_checkpoint
from nlrelu.network.checkpoint import CheckpointError, dumps, loads
from nlrelu.network.model import ParamStore
from nlrelu.tensor import RngStream


def tiny_store():
    return ParamStore({"1.b": np.array([0.5, -2.0]), "0.w": np.array([[1.0]])}, trainable=["0.w", "1.b"])


class TestLayout:
    def test_hand_computed_bytes(self):
        expected = (b"NLRL" + struct.pack("<II", 1, 2)
                    + struct.pack("<I", 3) + b"0.w" + struct.pack("<III", 2, 1, 1) + struct.pack("<d", 1.0)
                    + struct.pack("<I", 3) + b"1.b" + struct.pack("<II", 1, 2) + struct.pack("<dd", 0.5, -2.0))
        assert dumps(tiny_store(), 2) == expected

    def test_scalar_tensor(self):
        raw = dumps({"s": np.float64(3.0)}, 0)
        _, p = loads(raw)
        assert p["s"].shape == () and p["s"] == 3.0


class TestRoundTrip:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        net, p = build(presets.tiny_resnet(ActivationSpec("prelu"), widths=(4, 8, 8), units_per_stage=1),
                       (3, 8, 8), "msra", RngStream(1))
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(a, p, len(net.layers))
        count, q = load_checkpoint(a, p.trainable)
        save_checkpoint(b, q, count)
        assert a.read_bytes() == b.read_bytes()
        assert count == len(net.layers) and q.trainable == p.trainable
        assert all(np.array_equal(p[k], q[k]) for k in p)

    def test_extreme_values_survive(self):
        vals = np.array([np.nextafter(0, 1), -0.0, 1.7976931348623157e308, np.pi])
        _, p = loads(dumps({"x": vals}, 1))
        assert p["x"].tobytes() == vals.tobytes()

    def test_order_independent(self):
        a = dumps({"b": np.ones(1), "a": np.zeros(2)}, 1)
        b = dumps({"a": np.zeros(2), "b": np.ones(1)}, 1)
        assert a == b


class TestErrors:
    def test_bad_magic(self):
        with pytest.raises(CheckpointError, match="magic"):
            loads(b"NLRX" + bytes(8))

    def test_bad_version(self):
        with pytest.raises(CheckpointError, match="version"):
            loads(b"NLRL" + struct.pack("<II", 2, 0))

    def test_truncated_header(self):
        with pytest.raises(CheckpointError):
            loads(b"NLRL\x01")

    @pytest.mark.parametrize("cut", [1, 5, 9, 20])
    def test_truncated_record(self, cut):
        raw = dumps(tiny_store(), 2)
        with pytest.raises(CheckpointError):
            loads(raw[:-cut])
