"""Flat binary checkpoint format.

Layout (little-endian)::

    magic   b"ECGK"
    u32     format version (1)
    u32     entry count
    per entry:
        u32     name length, then UTF-8 name bytes
        u32     ndim, then ndim x u32 extents
        f32     data, row-major
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"ECGK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(state) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, arr in state.items():
        encoded = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    state = OrderedDict()
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * size > len(blob):
                raise CheckpointError(f"truncated data for {name!r}")
            state[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(
                shape).astype(np.float32)
            pos += 4 * size
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes")
    return state


def save(state, path) -> None:
    Path(path).write_bytes(dumps(state))


def load(path) -> "OrderedDict[str, np.ndarray]":
    return loads(Path(path).read_bytes())
