"""Shared helpers for the binary container formats (datasets, checkpoints).

All multi-byte fields are little-endian. Readers raise a typed error for
every malformed-input case instead of crashing.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class FormatError(Exception):
    """Base error for malformed binary containers."""


class CorruptHeaderError(FormatError):
    """The file does not start with the expected magic bytes or header."""


class VersionMismatchError(FormatError):
    """The container version is not supported by this build."""


class TruncatedPayloadError(FormatError):
    """The file ends before the payload promised by its header."""


def read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedPayloadError(f"expected {n} bytes for {what}, got {len(data)}")
    return data


def read_struct(f: BinaryIO, fmt: str, what: str) -> tuple:
    size = struct.calcsize(fmt)
    return struct.unpack(fmt, read_exact(f, size, what))


def write_struct(f: BinaryIO, fmt: str, *values) -> None:
    f.write(struct.pack(fmt, *values))


def read_f64_array(f: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = read_exact(f, count * 8, what)
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def write_f64_array(f: BinaryIO, arr: np.ndarray) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_u32_array(f: BinaryIO, count: int, what: str) -> np.ndarray:
    raw = read_exact(f, count * 4, what)
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)


def write_u32_array(f: BinaryIO, arr) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<u4").tobytes())


def check_no_trailing(f: BinaryIO) -> None:
    if f.read(1):
        raise FormatError("file has trailing bytes after the promised payload")
