"""RFDW weight container.

Layout (all integers little-endian)::

    b"RFDW" | version u32 | count u32
    count x ( name_len u16 | utf-8 name | rank u8 | dims u32 * rank | float32 LE values )

Tensors are written in lexicographic name order.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .arch import WeightStore
from .errors import WeightFormatError

MAGIC = b"RFDW"
VERSION = 1


def dumps(weights: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(weights)))
    for name in sorted(weights):
        arr = np.asarray(weights[name])
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> WeightStore:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise WeightFormatError("weight file is truncated")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise WeightFormatError("bad magic bytes: not an RFDW weight file")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise WeightFormatError(f"unsupported weight file version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError("tensor name is not valid UTF-8") from exc
        if name in tensors:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        values = np.frombuffer(take(4 * size), dtype="<f4")
        tensors[name] = values.astype(np.float32).reshape(dims)
    if pos != len(view):
        raise WeightFormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return WeightStore(tensors)


def save_weights(weights: Mapping[str, np.ndarray], path) -> None:
    Path(path).write_bytes(dumps(weights))


def load_weights(path) -> WeightStore:
    return loads(Path(path).read_bytes())
