"""Convert PyTorch models and image datasets into the toolkit's formats.

Model export walks a sequential module tree and writes one TDT1 file per
parameter tensor plus a JSON manifest. Convolution kernels are transposed
from the framework's (out, in/groups, kh, kw) layout into the toolkit's
(in/groups, kh, kw, out) mode order; linear weights from (out, in) to
(in, out). Dataset export standardizes pixels per channel and records the
constants in a sidecar so the transform can be inverted.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import formats

SUPPORTED = (nn.Conv2d, nn.BatchNorm2d, nn.ReLU, nn.MaxPool2d,
             nn.AdaptiveAvgPool2d, nn.Flatten, nn.Linear)


def _pair(v):
    return [v, v] if isinstance(v, int) else [int(v[0]), int(v[1])]


def _leaf_modules(model: nn.Module):
    children = list(model.children())
    if not children:
        return [model]
    out = []
    for child in children:
        out.extend(_leaf_modules(child))
    return out


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float64)


def export_model(model: nn.Module, out_dir, name: str, input_shape,
                 normalization=None) -> Path:
    """Write the model as tensors plus a manifest; returns the manifest path.

    ``input_shape`` is (C, H, W). Only sequential compositions of the
    supported module types can be exported; anything else raises with the
    offending module named.
    """
    out_dir = Path(out_dir)
    tensors = out_dir / "tensors"
    tensors.mkdir(parents=True, exist_ok=True)
    model = model.eval()

    layers = []
    counts: dict[str, int] = {}

    def fresh_id(kind):
        counts[kind] = counts.get(kind, 0) + 1
        return f"{kind}{counts[kind] - 1}"

    def save(lid, suffix, arr):
        fname = f"{lid}_{suffix}.tdt" if suffix else f"{lid}.tdt"
        formats.write_tensor(tensors / fname, arr)
        return f"tensors/{fname}"

    for mod in _leaf_modules(model):
        if isinstance(mod, nn.Conv2d):
            lid = fresh_id("conv")
            if any(d != 1 for d in _pair(mod.dilation)):
                raise ValueError(f"unsupported layer: {lid} uses dilation {mod.dilation}")
            w = _np(mod.weight).transpose(1, 2, 3, 0)  # (in/groups, kh, kw, out)
            entry = {
                "id": lid, "type": "conv2d",
                "weight": save(lid, "", w), "shape": list(w.shape),
                "bias": save(lid, "bias", _np(mod.bias)) if mod.bias is not None else None,
                "stride": _pair(mod.stride), "padding": _pair(mod.padding),
                "groups": int(mod.groups),
            }
            layers.append(entry)
        elif isinstance(mod, nn.BatchNorm2d):
            lid = fresh_id("bn")
            c = mod.num_features
            scale = _np(mod.weight) if mod.weight is not None else np.ones(c)
            shift = _np(mod.bias) if mod.bias is not None else np.zeros(c)
            layers.append({
                "id": lid, "type": "batchnorm",
                "scale": save(lid, "scale", scale), "shift": save(lid, "shift", shift),
                "mean": save(lid, "mean", _np(mod.running_mean)),
                "var": save(lid, "var", _np(mod.running_var)),
                "eps": float(mod.eps),
            })
        elif isinstance(mod, nn.ReLU):
            layers.append({"id": fresh_id("relu"), "type": "relu"})
        elif isinstance(mod, nn.MaxPool2d):
            if _pair(mod.padding) != [0, 0]:
                raise ValueError("unsupported layer: padded max pooling")
            layers.append({"id": fresh_id("pool"), "type": "maxpool",
                           "kernel": _pair(mod.kernel_size), "stride": _pair(mod.stride)})
        elif isinstance(mod, nn.AdaptiveAvgPool2d):
            size = mod.output_size
            size = (size, size) if isinstance(size, int) else tuple(size)
            if size not in ((1, 1), (1,)):
                raise ValueError(f"unsupported layer: AdaptiveAvgPool2d with output {size}")
            layers.append({"id": fresh_id("gap"), "type": "global_avgpool"})
        elif isinstance(mod, nn.Flatten):
            layers.append({"id": fresh_id("flatten"), "type": "flatten"})
        elif isinstance(mod, nn.Linear):
            lid = fresh_id("fc")
            w = _np(mod.weight).transpose(1, 0)  # (in, out)
            layers.append({
                "id": lid, "type": "linear",
                "weight": save(lid, "", w), "shape": list(w.shape),
                "bias": save(lid, "bias", _np(mod.bias)) if mod.bias is not None else None,
            })
        else:
            raise ValueError(f"unsupported layer type {type(mod).__name__}")

    class_count = None
    for entry in reversed(layers):
        if entry["type"] == "linear":
            class_count = entry["shape"][1]
            break
    if class_count is None:
        raise ValueError("model has no final linear layer")

    manifest = {"name": name, "class_count": class_count,
                "input_shape": [int(v) for v in input_shape], "layers": layers}
    if normalization is not None:
        manifest["normalization"] = {
            "mean": [float(v) for v in normalization[0]],
            "std": [float(v) for v in normalization[1]],
        }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def import_model_weights(manifest_path):
    """Read an exported manifest back into framework-layout numpy arrays.

    Returns {layer_id: array} with conv kernels in (out, in/groups, kh, kw)
    and linear weights in (out, in) order, inverting the export transpose.
    """
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    out = {}
    for entry in spec["layers"]:
        if entry["type"] == "conv2d":
            w = formats.read_tensor(manifest_path.parent / entry["weight"])
            out[entry["id"]] = w.transpose(3, 0, 1, 2)
        elif entry["type"] == "linear":
            w = formats.read_tensor(manifest_path.parent / entry["weight"])
            out[entry["id"]] = w.transpose(1, 0)
    return out


def compute_normalization(images) -> tuple:
    """Per-channel (mean, std) over a (N, C, H, W) pixel array."""
    images = np.asarray(images, dtype=np.float64)
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


def balanced_subset(labels, per_class: int):
    """Indices of the first ``per_class`` samples of every class."""
    labels = np.asarray(labels)
    picks = []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if len(idx) < per_class:
            raise ValueError(f"class {cls} has only {len(idx)} samples, need {per_class}")
        picks.append(idx[:per_class])
    return np.sort(np.concatenate(picks))


def export_dataset(images, labels, out_path, normalization=None, limit=None,
                   balanced=False, dtype: str = "f64") -> dict:
    """Standardize pixels and write a TDS1 file plus a JSON sidecar.

    ``images`` are raw (N, C, H, W) pixel values. When ``normalization`` is
    None the per-channel constants are computed from the selected samples.
    Stored in f64 by default so inverse standardization reproduces the
    source pixels. Returns the sidecar dict (also written to
    ``<out_path>.json``).
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if balanced:
        classes, counts = np.unique(labels, return_counts=True)
        per_class = int(counts.min())
        if limit is not None:
            per_class = min(per_class, limit // len(classes))
        idx = balanced_subset(labels, per_class)
        images, labels = images[idx], labels[idx]
    elif limit is not None:
        images, labels = images[:limit], labels[:limit]
    if len(images) == 0:
        raise ValueError("no samples selected")
    mean, std = normalization if normalization is not None else compute_normalization(images)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    standardized = (images - mean[None, :, None, None]) / std[None, :, None, None]
    formats.write_dataset(out_path, standardized, labels, dtype=dtype)
    sidecar = {
        "count": int(len(images)),
        "channels": int(images.shape[1]),
        "height": int(images.shape[2]),
        "width": int(images.shape[3]),
        "mean": [float(v) for v in mean],
        "std": [float(v) for v in std],
    }
    Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return sidecar


def load_source(name: str, split: str = "train", root: str = "data", size=None, seed: int = 0):
    """Load raw pixels/labels for a named dataset via torchvision.

    ``fake`` generates deterministic random images offline; ``cifar10`` and
    ``fashion-mnist`` require the torchvision data files under ``root``.
    """
    name = name.lower()
    if name == "fake":
        from torchvision import datasets as tvd

        shape = tuple(size) if size else (3, 32, 32)
        ds = tvd.FakeData(size=200 if split == "train" else 50, image_size=shape,
                          num_classes=10, random_offset=seed)
        images = np.stack([np.asarray(img, dtype=np.float64) for img, _ in ds])
        images = images.transpose(0, 3, 1, 2) if images.ndim == 4 else images[:, None]
        labels = np.array([int(lab) for _, lab in ds])
        return images, labels
    if name in ("cifar10", "fashion-mnist"):
        from torchvision import datasets as tvd

        ctor = tvd.CIFAR10 if name == "cifar10" else tvd.FashionMNIST
        if split not in ("train", "test"):
            raise ValueError(f"unknown split {split!r} (expected train or test)")
        ds = ctor(root=root, train=split == "train", download=False)
        data = np.asarray(ds.data, dtype=np.float64)
        if data.ndim == 3:
            data = data[:, None, :, :]
        else:
            data = data.transpose(0, 3, 1, 2)
        return data, np.asarray(ds.targets, dtype=np.int64)
    raise ValueError(f"unknown dataset {name!r} (expected fake, cifar10, or fashion-mnist)")


PERFORMANCE_COLUMNS = ["layer_id", "method", "retained_fraction", "seed", "p", "p_star"]


def export_performance_csv(records, out_path) -> None:
    """Write measured performance rows in the schema the study harness ingests.

    Each record needs layer_id, method, retained_fraction, and seed, plus a
    p and/or p_star value.
    """
    with open(out_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PERFORMANCE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            if "p" not in rec and "p_star" not in rec:
                raise ValueError(f"record {rec} has neither p nor p_star")
            w.writerow({col: rec.get(col, "") for col in PERFORMANCE_COLUMNS})
