"""Binary field container and shared serialization primitives.

PWF2 layout (all integers little-endian, payload little-endian float64):

    magic    4 bytes  b"PWF2"
    version  u32      currently 1
    channels u32      1 = medium, 2 = wave field (u, v), 3 = energy field
    rank     u32      1 or 2
    dims     u32*rank points per dimension
    payload  f64      channels * prod(dims) values, row-major, channel-major

The same container stores media, wave fields, and energy fields; readers
dispatch on the channel count.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError

FIELD_MAGIC = b"PWF2"
FIELD_VERSION = 1


def read_exact(f: BinaryIO, size: int, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise FormatError(f"truncated file while reading {what}")
    return data


def read_struct(f: BinaryIO, fmt: str, what: str) -> tuple:
    size = struct.calcsize(fmt)
    return struct.unpack(fmt, read_exact(f, size, what))


def expect_magic(f: BinaryIO, magic: bytes, version: int) -> None:
    got = read_exact(f, len(magic), "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (ver,) = read_struct(f, "<I", "version")
    if ver != version:
        raise FormatError(f"unsupported {magic.decode()} version {ver}")


def write_f64(f: BinaryIO, arr: np.ndarray) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_f64(f: BinaryIO, count: int, what: str) -> np.ndarray:
    raw = read_exact(f, 8 * count, what)
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def write_field_file(path: str | Path, values: np.ndarray) -> None:
    """Write a (channels, n, ...) or bare (n, ...) float array as PWF2."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim in (1, 2):
        arr = arr[None]  # single channel
    if arr.ndim not in (2, 3):
        raise FormatError(f"cannot store a rank-{arr.ndim - 1} field")
    channels = arr.shape[0]
    dims = arr.shape[1:]
    with open(path, "wb") as f:
        f.write(FIELD_MAGIC)
        f.write(struct.pack("<III", FIELD_VERSION, channels, len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        write_f64(f, arr)


def read_field_file(path: str | Path) -> np.ndarray:
    """Read a PWF2 file; returns a (channels, *dims) float64 array."""
    with open(path, "rb") as f:
        expect_magic(f, FIELD_MAGIC, FIELD_VERSION)
        channels, rank = read_struct(f, "<II", "field header")
        if channels < 1 or channels > 16 or rank not in (1, 2):
            raise FormatError(f"implausible field header: {channels} ch, rank {rank}")
        dims = read_struct(f, f"<{rank}I", "field dims")
        if any(d < 1 for d in dims):
            raise FormatError(f"bad field dims {dims}")
        count = channels * int(np.prod(dims))
        payload = read_f64(f, count, "field payload")
        if f.read(1):
            raise FormatError("trailing bytes after field payload")
    return payload.reshape((channels, *dims))
