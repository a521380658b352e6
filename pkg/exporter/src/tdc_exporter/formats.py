"""Writers and readers for the toolkit's binary file formats.

These are implemented against the documented formats (not by importing the
core package): TDT1 tensors carry a magic, dtype code, ndim, reserved
bytes, u64 mode sizes, and a row-major little-endian payload; TDS1
datasets carry sample count, channels, height, width, a dtype code, the
sample payload, and u16 labels.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

TDT1_MAGIC = b"TDT1"
TDS1_MAGIC = b"TDS1"
_DTYPES = {0: "<f4", 1: "<f8"}
_CODES = {"f32": 0, "f64": 1}


def write_tensor(path, arr, dtype: str = "f32") -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    code = _CODES[dtype]
    header = TDT1_MAGIC + struct.pack("<BB6x", code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    Path(path).write_bytes(header + dims + arr.astype(_DTYPES[code]).tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != TDT1_MAGIC:
        raise ValueError(f"{path}: not a TDT1 file")
    code, ndim = struct.unpack_from("<BB", raw, 4)
    shape = struct.unpack_from(f"<{ndim}Q", raw, 12)
    dt = np.dtype(_DTYPES[code])
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) != 12 + 8 * ndim + count * dt.itemsize:
        raise ValueError(f"{path}: size does not match header")
    return np.frombuffer(raw, dtype=dt, count=count, offset=12 + 8 * ndim).reshape(shape).copy()


def write_dataset(path, images, labels, dtype: str = "f32") -> None:
    images = np.ascontiguousarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    n, c, h, w = images.shape
    code = _CODES[dtype]
    header = TDS1_MAGIC + struct.pack("<IIIIB", n, c, h, w, code)
    payload = images.astype(_DTYPES[code]).tobytes(order="C")
    Path(path).write_bytes(header + payload + labels.astype("<u2").tobytes(order="C"))


def read_dataset(path):
    raw = Path(path).read_bytes()
    if raw[:4] != TDS1_MAGIC:
        raise ValueError(f"{path}: not a TDS1 file")
    n, c, h, w, code = struct.unpack_from("<IIIIB", raw, 4)
    dt = np.dtype(_DTYPES[code])
    count = n * c * h * w
    images = np.frombuffer(raw, dtype=dt, count=count, offset=21).reshape(n, c, h, w)
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=21 + count * dt.itemsize)
    return images.astype(np.float64), labels.astype(np.int64)
