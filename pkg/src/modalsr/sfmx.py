"""SFMX binary matrix format: magic, version, dtype, dims, row-major payload.

Layout (little-endian):
    bytes 0-3   magic "SFMX"
    bytes 4-5   version (u16) = 1
    byte  6     dtype code (u8): 0 = float64, 1 = complex128
    byte  7     ndims (u8)
    then        ndims dims, u64 each
    then        payload, row-major

Round-trips are bit-exact.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import SfmxFormatError

MAGIC = b"SFMX"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype("float64"): 0, np.dtype("complex128"): 1}


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write an array atomically (temp file + rename in the target directory)."""
    arr = np.asarray(matrix)
    if arr.ndim:
        arr = np.ascontiguousarray(arr)    # ascontiguousarray would promote 0-d to 1-d
    if arr.dtype not in _CODES:
        if np.issubdtype(arr.dtype, np.complexfloating):
            arr = arr.astype(np.complex128)
        elif np.issubdtype(arr.dtype, np.number):
            arr = arr.astype(np.float64)
        else:
            raise SfmxFormatError(f"unsupported dtype {arr.dtype}")
    code = _CODES[arr.dtype]
    header = MAGIC + struct.pack("<HBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(arr.astype(_DTYPES[code], copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise SfmxFormatError("file shorter than the fixed header", offset=len(data))
    if data[:4] != MAGIC:
        raise SfmxFormatError(f"bad magic {data[:4]!r}", offset=0)
    version, code, ndims = struct.unpack_from("<HBB", data, 4)
    if version != VERSION:
        raise SfmxFormatError(f"unsupported version {version}", offset=4)
    if code not in _DTYPES:
        raise SfmxFormatError(f"unknown dtype code {code}", offset=6)
    offset = 8
    if len(data) < offset + 8 * ndims:
        raise SfmxFormatError("truncated dims", offset=len(data))
    dims = struct.unpack_from(f"<{ndims}Q", data, offset)
    offset += 8 * ndims
    dtype = _DTYPES[code]
    expected = int(np.prod(dims)) * dtype.itemsize if ndims else dtype.itemsize
    if ndims == 0:
        dims = ()
        expected = dtype.itemsize
    if len(data) - offset != expected:
        raise SfmxFormatError(
            f"payload is {len(data) - offset} bytes, expected {expected}", offset=offset
        )
    arr = np.frombuffer(data[offset:], dtype=dtype).reshape(dims)
    return arr.copy()
