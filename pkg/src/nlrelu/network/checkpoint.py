"""Binary parameter checkpoints.

Layout (all integers little-endian u32)::

    b"NLRL" | version | layer_count
    repeated until EOF:
        name_len | name (UTF-8) | rank | dims[rank] | float64 LE payload

Records are written in sorted name order so equal stores give equal bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DatasetError
from .model import ParamStore

MAGIC = b"NLRL"
VERSION = 1


class CheckpointError(DatasetError):
    pass


def dumps(params, layer_count: int) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, layer_count)]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(data: bytes, trainable=()) -> tuple[int, ParamStore]:
    """Parse a checkpoint; returns ``(layer_count, params)``."""
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}")
    if len(data) < 12:
        raise CheckpointError("truncated header")
    version, layer_count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    tensors = {}
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos : pos + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise CheckpointError("truncated tensor name")
            pos += n
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            end = pos + 8 * count
            if end > len(data):
                raise CheckpointError(f"truncated payload for {name}")
            tensors[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(dims)
            pos = end
    except struct.error as e:
        raise CheckpointError(f"truncated record: {e}") from None
    return layer_count, ParamStore(tensors, trainable=[k for k in trainable if k in tensors])


def save(path, params, layer_count: int) -> None:
    Path(path).write_bytes(dumps(params, layer_count))


def load(path, trainable=()) -> tuple[int, ParamStore]:
    return loads(Path(path).read_bytes(), trainable)
