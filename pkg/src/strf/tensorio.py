"""Binary tensor files.

Layout, all little-endian:
  bytes 0..3   magic "STRF"
  byte  4      format version (0x01)
  byte  5      rank
  next 4*rank  u32 extents, outermost first
  rest         IEEE-754 single precision data, row-major

Readers reject anything with the wrong magic or version.
"""
from __future__ import annotations

import io
import struct
from os import PathLike

import numpy as np

from .errors import ContractError, DataError

MAGIC = b"STRF"
VERSION = 1
_MAX_RANK = 255


def header_size(rank: int) -> int:
    return len(MAGIC) + 2 + 4 * rank


def write_tensor(dest, array: np.ndarray) -> None:
    """Serialize a float32 array to ``dest`` (path or binary file object)."""
    # asarray keeps rank-0 inputs rank 0; ascontiguousarray would lift them to rank 1
    array = np.asarray(array, order="C")
    if array.dtype != np.float32:
        raise ContractError(f"tensor files hold single precision data, got {array.dtype}")
    if array.ndim > _MAX_RANK:
        raise ContractError(f"rank {array.ndim} exceeds the format limit of {_MAX_RANK}")
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<BB", VERSION, array.ndim)
    payload += struct.pack(f"<{array.ndim}I", *array.shape)
    payload += array.astype("<f4", copy=False).tobytes(order="C")
    if isinstance(dest, (str, PathLike)):
        with open(dest, "wb") as fh:
            fh.write(payload)
    else:
        dest.write(bytes(payload))


def read_tensor(src) -> np.ndarray:
    """Read one tensor from ``src`` (path or binary file object)."""
    if isinstance(src, (str, PathLike)):
        with open(src, "rb") as fh:
            return _read_stream(fh, name=str(src))
    return _read_stream(src, name=getattr(src, "name", "<stream>"))


def _read_stream(fh: io.BufferedIOBase, name: str) -> np.ndarray:
    head = fh.read(len(MAGIC) + 2)
    if len(head) < len(MAGIC) + 2 or head[: len(MAGIC)] != MAGIC:
        raise DataError(f"{name}: not a tensor file (bad magic)")
    version, rank = struct.unpack("<BB", head[len(MAGIC) :])
    if version != VERSION:
        raise DataError(f"{name}: unsupported tensor format version {version}")
    dim_bytes = fh.read(4 * rank)
    if len(dim_bytes) != 4 * rank:
        raise DataError(f"{name}: truncated tensor header")
    dims = struct.unpack(f"<{rank}I", dim_bytes) if rank else ()
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise DataError(f"{name}: expected {count} float32 values, file is short")
    return np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32, copy=True)
