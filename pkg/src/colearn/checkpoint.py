"""Versioned binary checkpoint container.

Layout: magic(8), version(u32), config-JSON length(u32) + bytes, parameter
count(u32), then per parameter: name length(u16) + UTF-8 name, ndim(u8),
ndim x u32 extents, row-major float64 payload. Round-trips are bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .binio import (
    CorruptHeaderError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
    check_no_trailing,
    read_exact,
    read_f64_array,
    read_struct,
    write_f64_array,
    write_struct,
)

__all__ = [
    "save_checkpoint",
    "load_checkpoint",
    "FormatError",
    "CorruptHeaderError",
    "VersionMismatchError",
    "TruncatedPayloadError",
]

_MAGIC = b"MMCHKPT1"
_VERSION = 1


def save_checkpoint(path, config: dict, params: dict[str, np.ndarray]) -> None:
    config_blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        write_struct(f, "<I", _VERSION)
        write_struct(f, "<I", len(config_blob))
        f.write(config_blob)
        write_struct(f, "<I", len(params))
        for name, arr in params.items():
            encoded = name.encode("utf-8")
            write_struct(f, "<H", len(encoded))
            f.write(encoded)
            arr = np.asarray(arr, dtype=np.float64)
            write_struct(f, "<B", arr.ndim)
            for extent in arr.shape:
                write_struct(f, "<I", extent)
            write_f64_array(f, arr)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CorruptHeaderError(f"bad magic bytes {magic!r}; not a checkpoint file")
        try:
            (version,) = read_struct(f, "<I", "checkpoint version")
        except TruncatedPayloadError as exc:
            raise CorruptHeaderError(str(exc)) from exc
        if version != _VERSION:
            raise VersionMismatchError(f"checkpoint version {version} unsupported (expected {_VERSION})")
        (config_len,) = read_struct(f, "<I", "config length")
        try:
            config = json.loads(read_exact(f, config_len, "config blob").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptHeaderError(f"unreadable config blob: {exc}") from exc
        (count,) = read_struct(f, "<I", "parameter count")
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = read_struct(f, "<H", "parameter name length")
            name = read_exact(f, name_len, "parameter name").decode("utf-8")
            (ndim,) = read_struct(f, "<B", f"{name}: ndim")
            shape = tuple(read_struct(f, "<I", f"{name}: shape")[0] for _ in range(ndim))
            params[name] = read_f64_array(f, shape, f"{name}: payload")
        check_no_trailing(f)
    return config, params
