"""Fixed-layout binary tensor container.

Layout (little-endian throughout):

    magic   4 bytes  b"APFT"
    version u16      currently 1
    ndim    u16
    dims    ndim x u64
    dtype   u8       1 = float32 (the only tag defined)
    pad     zero bytes to the next 8-byte boundary
    payload row-major float32 values

A byte-stable format is required here: the parallel pipeline's claims are
stated as byte equality of output files, which a text format cannot offer.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"APFT"
VERSION = 1
DTYPE_F32 = 1


def _padded_header_len(ndim: int) -> int:
    raw = 4 + 2 + 2 + 8 * ndim + 1
    return (raw + 7) // 8 * 8


def write_tensor(path: str | Path, arr: np.ndarray) -> Path:
    """Write one float32 tensor to `path`; returns the path."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    header = MAGIC + struct.pack("<HH", VERSION, arr.ndim)
    header += b"".join(struct.pack("<Q", d) for d in arr.shape)
    header += struct.pack("<B", DTYPE_F32)
    header += b"\x00" * (_padded_header_len(arr.ndim) - len(header))
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        if arr.dtype.byteorder == ">":  # pragma: no cover - big-endian hosts only
            arr = arr.astype("<f4")
        fh.write(arr.tobytes())
    return path


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor written by write_tensor, validating the layout."""
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic {data[:4]!r}")
    version, ndim = struct.unpack_from("<HH", data, 4)
    if version != VERSION:
        raise ContainerFormatError(f"{path}: unsupported version {version}")
    header_len = _padded_header_len(ndim)
    if len(data) < header_len:
        raise ContainerFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", data, 8)
    (dtype_tag,) = struct.unpack_from("<B", data, 8 + 8 * ndim)
    if dtype_tag != DTYPE_F32:
        raise ContainerFormatError(f"{path}: unknown dtype tag {dtype_tag}")
    count = 1
    for d in dims:
        count *= d
    payload = data[header_len:]
    if len(payload) != count * 4:
        raise ContainerFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {count * 4}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return arr.astype(np.float32, copy=True)
