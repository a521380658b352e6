"""Approximation-error measures between original and compressed weights.

Six measures: the Frobenius norm of the weight difference in absolute,
relative (divided by the norm of the original), and scaled (divided by the
element count) form, and the same three on the features the layer produces
for a batch of inputs. The feature variants average per-sample values, so
the relative one is a mean of per-sample ratios (mean-of-ratios, not
ratio-of-means). Denominators always come from the uncompressed side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convnet, decomp, tensor

NO_CHANGE = float("-inf")  # checkpoint_change sentinel for identical tensors

ERROR_KEYS = (
    "weight_absolute",
    "weight_relative",
    "weight_scaled",
    "feature_absolute",
    "feature_relative",
    "feature_scaled",
)


@dataclass(frozen=True)
class ErrorReport:
    weight_absolute: float
    weight_relative: float
    weight_scaled: float
    n_w: int
    feature_absolute: float | None = None
    feature_relative: float | None = None
    feature_scaled: float | None = None
    n_f: int | None = None
    batch_size: int | None = None

    def to_dict(self) -> dict:
        return {
            "weight_absolute": self.weight_absolute,
            "weight_relative": self.weight_relative,
            "weight_scaled": self.weight_scaled,
            "feature_absolute": self.feature_absolute,
            "feature_relative": self.feature_relative,
            "feature_scaled": self.feature_scaled,
            "n_w": self.n_w,
            "n_f": self.n_f,
            "batch_size": self.batch_size,
        }


def weight_errors(w, w_hat):
    """(absolute, relative, scaled) Frobenius errors between two equal-shape tensors."""
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    if w.shape != w_hat.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {w_hat.shape}")
    absolute = tensor.frobenius_norm(w - w_hat)
    denom = tensor.frobenius_norm(w)
    if denom == 0.0:
        raise ValueError("relative weight error undefined for an all-zero reference tensor")
    return absolute, absolute / denom, absolute / w.size


def feature_errors(w, w_hat, inputs, stride=1, padding=0):
    """(absolute, relative, scaled) errors on the conv features over a batch.

    For each sample x: F = conv(x, w), F_hat = conv(x, w_hat). Absolute is
    the mean of ||F - F_hat||, relative the mean of per-sample ratios
    ||F - F_hat|| / ||F||, scaled the mean of ||F - F_hat|| / n_F.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 3:
        inputs = inputs[None]
    if inputs.ndim != 4 or len(inputs) == 0:
        raise ValueError("inputs must be a non-empty batch of (C, H, W) samples")
    absolutes, relatives, scaleds = [], [], []
    n_f = None
    for i, x in enumerate(inputs):
        f = convnet.conv2d_forward(x, w, stride, padding)
        f_hat = convnet.conv2d_forward(x, w_hat, stride, padding)
        n_f = f.size
        diff = tensor.frobenius_norm(f - f_hat)
        denom = tensor.frobenius_norm(f)
        if denom == 0.0:
            raise ValueError(f"relative feature error undefined: sample {i} produces all-zero features")
        absolutes.append(diff)
        relatives.append(diff / denom)
        scaleds.append(diff / n_f)
    return (
        float(np.mean(absolutes)),
        float(np.mean(relatives)),
        float(np.mean(scaleds)),
        n_f,
    )


def error_report(w, w_hat, inputs=None, stride=1, padding=0) -> ErrorReport:
    """Full :class:`ErrorReport`; feature entries only when inputs are given."""
    w = np.asarray(w, dtype=np.float64)
    wa, wr, ws = weight_errors(w, w_hat)
    if inputs is None:
        return ErrorReport(wa, wr, ws, n_w=w.size)
    fa, fr, fs, n_f = feature_errors(w, w_hat, inputs, stride, padding)
    batch = len(inputs) if np.asarray(inputs).ndim == 4 else 1
    return ErrorReport(wa, wr, ws, w.size, fa, fr, fs, n_f, batch)


def checkpoint_change(before, after):
    """Per-layer log10 relative weight change between two checkpoints.

    Inputs are matched lists of layer tensors (factorized layers must be
    expanded to dense first, e.g. via :func:`tdc.decomp.reconstruct`).
    Returns log10(||after - before|| / ||before||) per layer; identical
    tensors yield the ``NO_CHANGE`` sentinel (-inf).
    """
    if len(before) != len(after):
        raise ValueError(f"checkpoint layer counts differ: {len(before)} vs {len(after)}")
    out = []
    for i, (b, a) in enumerate(zip(before, after)):
        b = decomp.reconstruct(b) if not isinstance(b, np.ndarray) else np.asarray(b, dtype=np.float64)
        a = decomp.reconstruct(a) if not isinstance(a, np.ndarray) else np.asarray(a, dtype=np.float64)
        if b.shape != a.shape:
            raise ValueError(f"layer {i}: shape mismatch {b.shape} vs {a.shape}")
        denom = tensor.frobenius_norm(b)
        if denom == 0.0:
            raise ValueError(f"layer {i}: change undefined for an all-zero reference")
        diff = tensor.frobenius_norm(a - b)
        out.append(NO_CHANGE if diff == 0.0 else math.log10(diff / denom))
    return out
