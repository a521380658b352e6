"""Dense N-way tensor primitives.

Tensors are plain C-contiguous :class:`numpy.ndarray` values; all arithmetic
is carried out in float64 regardless of the on-disk storage precision.
This module provides the multilinear building blocks (Frobenius norm,
mode-n unfolding and its inverse, mode-n products) and the ``TDT1`` binary
tensor file format used everywhere else in the package.

Unfolding convention: the mode-n unfolding keeps the remaining modes in
ascending index order, with the highest mode cycling fastest (row-major
consistent). ``fold(unfold(t, n), n, t.shape)`` is bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

TDT1_MAGIC = b"TDT1"

# dtype codes in the TDT1 header
DTYPE_F32 = 0
DTYPE_F64 = 1
_DTYPE_BY_CODE = {DTYPE_F32: "<f4", DTYPE_F64: "<f8"}
_CODE_BY_NAME = {"f32": DTYPE_F32, "f64": DTYPE_F64}


class TensorFormatError(ValueError):
    """Raised for malformed TDT1 files."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Return ``data`` as a C-contiguous float64 ndarray, optionally reshaped."""
    t = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        t = t.reshape(shape)
    if t.ndim >= 1 and min(t.shape, default=1) < 1:
        raise ValueError("all mode sizes must be >= 1")
    return t


def frobenius_norm(t) -> float:
    """Frobenius norm: sqrt of the sum of squared entries."""
    t = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(t * t)))


def unfold(t, mode: int) -> np.ndarray:
    """Mode-n unfolding of ``t`` as a (shape[mode], prod(rest)) matrix."""
    t = np.asarray(t, dtype=np.float64)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for a {t.ndim}-way tensor")
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def fold(m, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for the given full tensor shape."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    m = np.asarray(m, dtype=np.float64)
    rest = tuple(s for i, s in enumerate(shape) if i != mode)
    if m.shape != (shape[mode], int(np.prod(rest, dtype=np.int64))):
        raise ValueError(f"matrix shape {m.shape} does not match unfolding of {shape} at mode {mode}")
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode))


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """Contract mode ``mode`` of ``t`` with the columns of matrix ``m``.

    Entry-wise: out[..., j, ...] = sum_i t[..., i, ...] * m[j, i], so the
    output shape equals the input shape with shape[mode] replaced by the
    row count of ``m``.
    """
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for a {t.ndim}-way tensor")
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(f"matrix of shape {m.shape} cannot contract mode {mode} of size {t.shape[mode]}")
    out = np.tensordot(t, m, axes=([mode], [1]))
    return np.ascontiguousarray(np.moveaxis(out, -1, mode))


def write_tensor(path, t, dtype: str = "f64") -> None:
    """Write ``t`` to ``path`` in the TDT1 format.

    Layout: magic ``TDT1``, u8 dtype code (0 = f32, 1 = f64), u8 ndim,
    6 reserved zero bytes, ndim little-endian u64 mode sizes, then the
    row-major little-endian payload.
    """
    if dtype not in _CODE_BY_NAME:
        raise ValueError(f"unsupported dtype {dtype!r} (expected 'f32' or 'f64')")
    t = as_tensor(t)
    code = _CODE_BY_NAME[dtype]
    header = TDT1_MAGIC + struct.pack("<BB6x", code, t.ndim)
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = t.astype(_DTYPE_BY_CODE[code]).tobytes(order="C")
    Path(path).write_bytes(header + dims + payload)


def read_tensor(path) -> np.ndarray:
    """Read a TDT1 file as a float64 ndarray (see :func:`read_header`)."""
    arr, _ = _read(path)
    return arr


def read_header(path) -> dict:
    """Return the TDT1 header of ``path`` as {'dtype', 'shape'}."""
    _, header = _read(path, payload=False)
    return header


def _read(path, payload: bool = True):
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise TensorFormatError(f"{path}: truncated header")
    if raw[:4] != TDT1_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    code, ndim = struct.unpack_from("<BB", raw, 4)
    if code not in _DTYPE_BY_CODE:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if raw[6:12] != b"\x00" * 6:
        raise TensorFormatError(f"{path}: reserved header bytes not zero")
    if len(raw) < 12 + 8 * ndim:
        raise TensorFormatError(f"{path}: truncated dimension list")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 12)
    if any(s < 1 for s in shape):
        raise TensorFormatError(f"{path}: mode sizes must be >= 1, got {shape}")
    header = {"dtype": "f32" if code == DTYPE_F32 else "f64", "shape": tuple(int(s) for s in shape)}
    if not payload:
        return None, header
    np_dtype = np.dtype(_DTYPE_BY_CODE[code])
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    expected = 12 + 8 * ndim + count * np_dtype.itemsize
    if len(raw) != expected:
        raise TensorFormatError(f"{path}: payload size {len(raw) - 12 - 8 * ndim} does not match shape {shape}")
    arr = np.frombuffer(raw, dtype=np_dtype, count=count, offset=12 + 8 * ndim)
    arr = arr.astype(np.float64).reshape(shape)
    return np.ascontiguousarray(arr), header
