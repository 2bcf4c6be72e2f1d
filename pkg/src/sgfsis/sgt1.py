"""Portable tensor file IO ("SGT1" format).

Layout: magic bytes ``SGT1``, u8 rank, rank x u32 little-endian extents,
u8 dtype code (0 = f32, 1 = u32, 2 = u8), then the raw little-endian
values in C order (channel-major, then row-major).
"""

import struct

import numpy as np

from .errors import DimensionError

MAGIC = b"SGT1"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<u4"), 2: np.dtype("u1")}
_CODE_FOR_KIND = {("f", 4): 0, ("u", 4): 1, ("u", 1): 2}


def write(path, array):
    """Write a 1-4 dimensional array as an SGT1 file."""
    arr = np.ascontiguousarray(array)
    if arr.ndim < 1 or arr.ndim > 4:
        raise DimensionError(f"SGT1 supports rank 1-4, got rank {arr.ndim}")
    if arr.dtype == np.float64:
        arr = arr.astype(np.float32)
    elif arr.dtype in (np.int32, np.int64, np.uint64):
        if arr.min() < 0:
            raise DimensionError("negative integers do not fit the u32 dtype")
        arr = arr.astype(np.uint32)
    key = (arr.dtype.kind, arr.dtype.itemsize)
    if key not in _CODE_FOR_KIND:
        raise DimensionError(f"unsupported dtype {arr.dtype}")
    code = _CODE_FOR_KIND[key]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(struct.pack("<B", code))
        fh.write(arr.astype(_DTYPE_CODES[code]).tobytes())


def read(path):
    """Read an SGT1 file back into a numpy array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise DimensionError(f"{path}: not an SGT1 file")
    rank = data[4]
    if rank < 1 or rank > 4:
        raise DimensionError(f"{path}: bad rank {rank}")
    off = 5
    dims = struct.unpack_from(f"<{rank}I", data, off)
    off += 4 * rank
    code = data[off]
    off += 1
    if code not in _DTYPE_CODES:
        raise DimensionError(f"{path}: unknown dtype code {code}")
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(dims))
    expected = off + count * dtype.itemsize
    if len(data) != expected:
        raise DimensionError(f"{path}: expected {expected} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
    return arr.reshape(dims).copy()
