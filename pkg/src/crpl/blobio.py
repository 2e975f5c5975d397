"""Little-endian binary blob helpers shared by dataset and checkpoint I/O.

All on-disk payloads are row-major little-endian float32 (embeddings,
token matrices) or uint32 (labels). In-memory arrays are float64; the
cast to float32 happens exactly once, on write.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import IoFailure, TruncatedBlob

_F32 = np.dtype("<f4")
_U32 = np.dtype("<u4")


def write_f32(path: str, arr: np.ndarray) -> None:
    """Write an array as little-endian float32, row-major."""
    try:
        np.ascontiguousarray(arr, dtype=_F32).tofile(path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_f32(path: str, shape: tuple[int, ...]) -> np.ndarray:
    """Read a little-endian float32 blob and return it as float64.

    Raises:
        TruncatedBlob: byte length does not match the declared shape.
        IoFailure: file missing or unreadable.
    """
    expected = int(np.prod(shape)) * 4
    try:
        actual = os.path.getsize(path)
        if actual != expected:
            raise TruncatedBlob(
                f"{path}: expected {expected} bytes for shape {shape}, found {actual}"
            )
        raw = np.fromfile(path, dtype=_F32)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return raw.astype(np.float64).reshape(shape)


def write_u32(path: str, arr: np.ndarray) -> None:
    """Write an integer array as little-endian uint32."""
    a = np.asarray(arr)
    if np.any(a < 0):
        raise ValueError("uint32 blob cannot hold negative values")
    try:
        np.ascontiguousarray(a, dtype=_U32).tofile(path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_u32(path: str, count: int) -> np.ndarray:
    """Read a little-endian uint32 blob of ``count`` entries as int64."""
    expected = count * 4
    try:
        actual = os.path.getsize(path)
        if actual != expected:
            raise TruncatedBlob(
                f"{path}: expected {expected} bytes for {count} entries, found {actual}"
            )
        raw = np.fromfile(path, dtype=_U32)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return raw.astype(np.int64)
