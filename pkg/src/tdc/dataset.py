"""TDS1 binary dataset files (images plus u16 labels).

Layout, all little-endian: magic ``TDS1``, u32 sample count, u32 channels,
u32 height, u32 width, u8 dtype code (0 = f32, 1 = f64), row-major sample
payload, then one u16 label per sample.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import DTYPE_F32, DTYPE_F64, TensorFormatError

TDS1_MAGIC = b"TDS1"
_DTYPE_BY_CODE = {DTYPE_F32: "<f4", DTYPE_F64: "<f8"}
_CODE_BY_NAME = {"f32": DTYPE_F32, "f64": DTYPE_F64}


def write_dataset(path, images, labels, dtype: str = "f32") -> None:
    images = np.ascontiguousarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 4:
        raise ValueError("images must be (N, C, H, W)")
    n, c, h, w = images.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ValueError("labels must fit in u16")
    if dtype not in _CODE_BY_NAME:
        raise ValueError(f"unsupported dtype {dtype!r}")
    code = _CODE_BY_NAME[dtype]
    header = TDS1_MAGIC + struct.pack("<IIIIB", n, c, h, w, code)
    payload = images.astype(_DTYPE_BY_CODE[code]).tobytes(order="C")
    lab = labels.astype("<u2").tobytes(order="C")
    Path(path).write_bytes(header + payload + lab)


def read_dataset(path):
    """Return (images float64 (N,C,H,W), labels int array)."""
    raw = Path(path).read_bytes()
    if len(raw) < 21:
        raise TensorFormatError(f"{path}: truncated header")
    if raw[:4] != TDS1_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    n, c, h, w, code = struct.unpack_from("<IIIIB", raw, 4)
    if code not in _DTYPE_BY_CODE:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    np_dtype = np.dtype(_DTYPE_BY_CODE[code])
    count = n * c * h * w
    expected = 21 + count * np_dtype.itemsize + 2 * n
    if len(raw) != expected:
        raise TensorFormatError(f"{path}: size {len(raw)} != expected {expected} for {n}x{c}x{h}x{w}")
    images = np.frombuffer(raw, dtype=np_dtype, count=count, offset=21)
    images = images.astype(np.float64).reshape(n, c, h, w)
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=21 + count * np_dtype.itemsize)
    return np.ascontiguousarray(images), labels.astype(np.int64)
