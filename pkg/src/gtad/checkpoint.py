"""Self-describing checkpoint container for named tensors.

Byte layout (all integers little-endian):

    offset  size        field
    0       4           magic "GTA1"
    4       4           uint32 tensor count N
    then N records, each:
            4           uint32 name length L
            L           name, UTF-8
            4           uint32 rank R
            8*R         uint64 extents, outermost first
            8*prod      float64 values, row-major, little-endian

Records are written in ascending name order so identical contents yield
bitwise-identical files. Values must be finite; save() refuses otherwise.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError
from .tensor import Tensor

MAGIC = b"GTA1"


def save(path: str | Path, tensors: dict[str, Tensor | np.ndarray]) -> None:
    """Write named tensors; rejects non-finite values."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = tensors[name]
        arr = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"checkpoint tensor {name!r} contains non-finite values")
        nb = name.encode("utf-8")
        out += struct.pack("<I", len(nb))
        out += nb
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += arr.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def load(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into a name -> float64 array mapping."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: bad magic, not a checkpoint file")
    pos = 4
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        extents = struct.unpack_from(f"<{rank}Q", raw, pos)
        pos += 8 * rank
        n = int(np.prod(extents)) if rank else 1
        vals = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).astype(np.float64)
        pos += 8 * n
        tensors[name] = vals.reshape(extents)
    if pos != len(raw):
        raise DataError(f"{path}: {len(raw) - pos} trailing bytes after last record")
    return tensors
