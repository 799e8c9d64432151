"""Versioned binary checkpoints for classifier and gate weights.

Byte layout (all integers little-endian)::

    offset  size        field
    0       4           magic b"NAI1"
    4       4           u32 format version (1)
    8       4           u32 metadata length L
    12      L           UTF-8 JSON metadata (kind, shapes, hyper-parameters)
    12+L    4           u32 array count A
    then A times:
            4           u32 ndim
            8 * ndim    u64 dims
            8 * prod    f64 values, C order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NAI1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(meta: dict, arrays) -> bytes:
    body = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(body)), body, struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def loads(buf: bytes):
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    try:
        version, mlen = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        meta = json.loads(buf[pos:pos + mlen].decode())
        pos += mlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        arrays = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            if pos + 8 * size > len(buf):
                raise CheckpointError("truncated checkpoint")
            arrays.append(np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).copy())
            pos += 8 * size
    except CheckpointError:
        raise
    except (struct.error, ValueError) as exc:
        raise CheckpointError("truncated or corrupt checkpoint") from exc
    return meta, arrays


def save(path, meta: dict, arrays) -> None:
    Path(path).write_bytes(dumps(meta, arrays))


def load(path):
    return loads(Path(path).read_bytes())
