"""Minimal deterministic inference engine for small CNNs.

Graphs are ordered layer lists loaded from a JSON manifest that references
TDT1 tensor files. Convolution weights use (C, H, W, T) mode order with C
input and T output channels; for grouped convolutions the stored C axis is
the per-group input channel count. Linear weights are stored
(in_features, out_features).

Convolution is direct (im2col windows contracted with the kernel), batch
normalization is inference-only, and evaluation processes samples one by
one so batched and sequential runs are bitwise identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import decomp, tensor


def _pair(v, name="value"):
    if isinstance(v, (int, np.integer)):
        return (int(v), int(v))
    v = tuple(int(x) for x in v)
    if len(v) != 2:
        raise ValueError(f"{name} must be an int or a pair")
    return v


@dataclass
class Conv2d:
    id: str
    weight: np.ndarray  # (C/groups, H, W, T)
    bias: np.ndarray | None = None
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    groups: int = 1
    type = "conv2d"


@dataclass
class BatchNorm:
    id: str
    scale: np.ndarray
    shift: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5
    type = "batchnorm"


@dataclass
class ReLU:
    id: str
    type = "relu"


@dataclass
class MaxPool:
    id: str
    kernel: tuple = (2, 2)
    stride: tuple = (2, 2)
    type = "maxpool"


@dataclass
class GlobalAvgPool:
    id: str
    type = "global_avgpool"


@dataclass
class Flatten:
    id: str
    type = "flatten"


@dataclass
class Linear:
    id: str
    weight: np.ndarray  # (in, out)
    bias: np.ndarray | None = None
    type = "linear"


@dataclass
class ResidualBegin:
    id: str
    type = "residual_begin"


@dataclass
class ResidualAdd:
    id: str
    type = "residual_add"


@dataclass(frozen=True)
class EvalResult:
    performance_error: float
    sample_count: int
    per_class_errors: dict

    def to_dict(self) -> dict:
        return {
            "performance_error": self.performance_error,
            "sample_count": self.sample_count,
            "per_class_errors": {str(k): v for k, v in sorted(self.per_class_errors.items())},
        }


@dataclass
class ModelGraph:
    name: str
    class_count: int
    input_shape: tuple  # (C, H, W)
    layers: list = field(default_factory=list)

    def layer(self, layer_id: str):
        for lay in self.layers:
            if lay.id == layer_id:
                return lay
        raise KeyError(f"no layer with id {layer_id!r}")

    def conv_layers(self) -> list:
        return [lay for lay in self.layers if isinstance(lay, Conv2d)]

    def decomposable_layer_ids(self) -> list:
        """Ungrouped conv layers, excluding the first conv and the last parameterized layer."""
        params = [lay for lay in self.layers if isinstance(lay, (Conv2d, Linear))]
        convs = self.conv_layers()
        out = []
        for lay in convs:
            if lay is convs[0] or lay is params[-1] or lay.groups != 1:
                continue
            out.append(lay.id)
        return out


def conv2d_forward(x, weight, stride=1, padding=0, groups: int = 1, bias=None) -> np.ndarray:
    """Direct 2-D cross-correlation of one sample.

    ``x`` is (C, Hin, Win); ``weight`` is (C/groups, H, W, T); output is
    (T, Hout, Wout) with Hout = floor((Hin + 2*ph - H) / sh) + 1.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.ndim != 3 or weight.ndim != 4:
        raise ValueError("conv2d_forward expects a (C,H,W) input and 4-way weight")
    cg, kh, kw, t_all = weight.shape
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    if x.shape[0] != cg * groups:
        raise ValueError(f"input has {x.shape[0]} channels, weight expects {cg * groups}")
    if t_all % groups:
        raise ValueError(f"output channels {t_all} not divisible by groups {groups}")
    if x.shape[1] + 2 * ph < kh or x.shape[2] + 2 * pw < kw:
        raise ValueError("kernel larger than padded input")

    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::sh, ::sw]  # (C, Ho, Wo, kh, kw)
    tg = t_all // groups
    outs = []
    for g in range(groups):
        wg = win[g * cg : (g + 1) * cg]
        kg = weight[:, :, :, g * tg : (g + 1) * tg]
        outs.append(np.einsum("cijhw,chwt->tij", wg, kg, optimize=True))
    out = outs[0] if groups == 1 else np.concatenate(outs, axis=0)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def _maxpool(x, kernel, stride):
    kh, kw = kernel
    sh, sw = stride
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    return win[:, ::sh, ::sw].max(axis=(3, 4))


def forward(graph: ModelGraph, x) -> np.ndarray:
    """Run one (C, H, W) sample through the graph; returns the logits."""
    x = np.asarray(x, dtype=np.float64)
    stack = []
    for lay in graph.layers:
        if isinstance(lay, Conv2d):
            x = conv2d_forward(x, lay.weight, lay.stride, lay.padding, lay.groups, lay.bias)
        elif isinstance(lay, BatchNorm):
            inv = 1.0 / np.sqrt(lay.var + lay.eps)
            x = (x - lay.mean[:, None, None]) * (lay.scale * inv)[:, None, None] + lay.shift[:, None, None]
        elif isinstance(lay, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(lay, MaxPool):
            x = _maxpool(x, lay.kernel, lay.stride)
        elif isinstance(lay, GlobalAvgPool):
            x = x.mean(axis=(1, 2))
        elif isinstance(lay, Flatten):
            x = x.reshape(-1)
        elif isinstance(lay, Linear):
            x = x.reshape(-1) @ lay.weight
            if lay.bias is not None:
                x = x + lay.bias
        elif isinstance(lay, ResidualBegin):
            stack.append(x)
        elif isinstance(lay, ResidualAdd):
            x = x + stack.pop()
        else:
            raise TypeError(f"unsupported layer {type(lay).__name__}")
    return x


def validate(graph: ModelGraph) -> None:
    """Shape-check the layer chain against the declared input shape."""
    shape = tuple(graph.input_shape)
    stack = []
    for lay in graph.layers:
        if isinstance(lay, Conv2d):
            if len(shape) != 3:
                raise ValueError(f"{lay.id}: conv input must be 3-d, got {shape}")
            cg, kh, kw, t = lay.weight.shape
            if shape[0] != cg * lay.groups:
                raise ValueError(f"{lay.id}: expects {cg * lay.groups} input channels, got {shape[0]}")
            if t % lay.groups:
                raise ValueError(f"{lay.id}: {t} output channels not divisible by groups {lay.groups}")
            if lay.bias is not None and lay.bias.shape != (t,):
                raise ValueError(f"{lay.id}: bias shape {lay.bias.shape} != ({t},)")
            ho = (shape[1] + 2 * lay.padding[0] - kh) // lay.stride[0] + 1
            wo = (shape[2] + 2 * lay.padding[1] - kw) // lay.stride[1] + 1
            if ho < 1 or wo < 1:
                raise ValueError(f"{lay.id}: output spatial dims {ho}x{wo} invalid")
            shape = (t, ho, wo)
        elif isinstance(lay, BatchNorm):
            c = shape[0]
            for nm in ("scale", "shift", "mean", "var"):
                if getattr(lay, nm).shape != (c,):
                    raise ValueError(f"{lay.id}: {nm} shape mismatch for {c} channels")
        elif isinstance(lay, MaxPool):
            ho = (shape[1] - lay.kernel[0]) // lay.stride[0] + 1
            wo = (shape[2] - lay.kernel[1]) // lay.stride[1] + 1
            if ho < 1 or wo < 1:
                raise ValueError(f"{lay.id}: pooled dims {ho}x{wo} invalid")
            shape = (shape[0], ho, wo)
        elif isinstance(lay, GlobalAvgPool):
            shape = (shape[0],)
        elif isinstance(lay, Flatten):
            shape = (int(np.prod(shape, dtype=np.int64)),)
        elif isinstance(lay, Linear):
            n_in = int(np.prod(shape, dtype=np.int64))
            if lay.weight.shape[0] != n_in:
                raise ValueError(f"{lay.id}: expects {lay.weight.shape[0]} inputs, got {n_in}")
            shape = (lay.weight.shape[1],)
        elif isinstance(lay, ResidualBegin):
            stack.append(shape)
        elif isinstance(lay, ResidualAdd):
            if not stack:
                raise ValueError(f"{lay.id}: residual_add without matching residual_begin")
            begin = stack.pop()
            if begin != shape:
                raise ValueError(f"{lay.id}: residual shapes differ: {begin} vs {shape}")
        elif isinstance(lay, ReLU):
            pass
        else:
            raise TypeError(f"unsupported layer {type(lay).__name__}")
    if stack:
        raise ValueError("residual_begin without matching residual_add")
    if shape != (graph.class_count,):
        raise ValueError(f"graph output shape {shape} != ({graph.class_count},)")


def substitute_layer(graph: ModelGraph, layer_id: str, fact, mode: str = "reconstruct") -> ModelGraph:
    """Return a new graph with ``layer_id`` replaced by the factorization.

    ``reconstruct`` swaps in the dense expanded weight; ``factorized``
    replaces the conv with the equivalent sequence of smaller convolutions
    (pointwise and separable/grouped, depending on the method).
    """
    if layer_id not in graph.decomposable_layer_ids():
        raise ValueError(f"layer {layer_id!r} is not decomposable (first/last layers are excluded)")
    lay = graph.layer(layer_id)
    if fact.shape != lay.weight.shape:
        raise ValueError(f"factorization shape {fact.shape} != layer weight shape {lay.weight.shape}")
    if mode == "reconstruct":
        new_layers = [replace(lay, weight=decomp.reconstruct(fact)) if l is lay else l for l in graph.layers]
    elif mode == "factorized":
        subs = _factorized_convs(lay, fact)
        idx = graph.layers.index(lay)
        new_layers = graph.layers[:idx] + subs + graph.layers[idx + 1 :]
    else:
        raise ValueError(f"unknown substitution mode {mode!r}")
    return ModelGraph(graph.name, graph.class_count, graph.input_shape, new_layers)


def _factorized_convs(lay: Conv2d, fact) -> list:
    sh, sw = lay.stride
    ph, pw = lay.padding
    lid = lay.id
    if isinstance(fact, decomp.CpFactorization):
        c, y, x, t = fact.factors
        r = fact.rank
        return [
            Conv2d(f"{lid}/cp_in", c[:, None, None, :]),
            Conv2d(f"{lid}/cp_h", y[None, :, None, :], stride=(sh, 1), padding=(ph, 0), groups=r),
            Conv2d(f"{lid}/cp_w", x[None, None, :, :], stride=(1, sw), padding=(0, pw), groups=r),
            Conv2d(f"{lid}/cp_out", np.ascontiguousarray(t.T)[:, None, None, :], bias=lay.bias),
        ]
    if isinstance(fact, decomp.TuckerFactorization):
        return [
            Conv2d(f"{lid}/tk_in", fact.c[:, None, None, :]),
            Conv2d(f"{lid}/tk_core", fact.core, stride=(sh, sw), padding=(ph, pw)),
            Conv2d(f"{lid}/tk_out", np.ascontiguousarray(fact.t.T)[:, None, None, :], bias=lay.bias),
        ]
    if isinstance(fact, decomp.TtFactorization):
        g0, g1, g2, g3 = fact.cores
        return [
            Conv2d(f"{lid}/tt_in", g0[:, None, None, :]),
            Conv2d(f"{lid}/tt_h", g1[:, :, None, :], stride=(sh, 1), padding=(ph, 0)),
            Conv2d(f"{lid}/tt_w", g2[:, None, :, :], stride=(1, sw), padding=(0, pw)),
            Conv2d(f"{lid}/tt_out", g3[:, None, None, :], bias=lay.bias),
        ]
    raise TypeError(f"not a factorization: {type(fact).__name__}")


def layer_inputs(graph: ModelGraph, layer_id: str, images) -> np.ndarray:
    """Activations feeding ``layer_id`` for a (N, C, H, W) batch."""
    images = np.asarray(images, dtype=np.float64)
    target = graph.layer(layer_id)
    idx = graph.layers.index(target)
    prefix = ModelGraph(graph.name, graph.class_count, graph.input_shape, graph.layers[:idx])
    return np.stack([forward(prefix, img) for img in images])


def evaluate(graph: ModelGraph, images, labels) -> EvalResult:
    """Classification error of the graph on the dataset (argmax; low index wins ties)."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 4 or len(images) != len(labels):
        raise ValueError("expected (N,C,H,W) images with matching labels")
    if len(images) == 0:
        raise ValueError("empty dataset")
    per_class: dict[int, int] = {}
    wrong = 0
    for img, lab in zip(images, labels):
        pred = int(np.argmax(forward(graph, img)))
        if pred != int(lab):
            wrong += 1
            per_class[int(lab)] = per_class.get(int(lab), 0) + 1
    return EvalResult(performance_error=wrong / len(images), sample_count=len(images), per_class_errors=per_class)


def logits_batch(graph: ModelGraph, images) -> np.ndarray:
    """Per-sample logits for a (N, C, H, W) batch, row per sample."""
    images = np.asarray(images, dtype=np.float64)
    return np.stack([forward(graph, img) for img in images])


_TENSOR_KEYS = {"conv2d": ["weight", "bias"], "linear": ["weight", "bias"],
                "batchnorm": ["scale", "shift", "mean", "var"]}


def load_manifest(path) -> ModelGraph:
    """Load and validate a model manifest; tensor refs resolve relative to it."""
    path = Path(path)
    spec = json.loads(path.read_text())
    base = path.parent

    def load_ref(entry, key, required=True):
        ref = entry.get(key)
        if ref is None:
            if required:
                raise ValueError(f"layer {entry.get('id')!r}: missing tensor ref {key!r}")
            return None
        arr = tensor.read_tensor(base / ref)
        declared = entry.get("shape")
        if key == "weight" and declared is not None and tuple(declared) != arr.shape:
            raise ValueError(f"layer {entry.get('id')!r}: declared shape {tuple(declared)} != file shape {arr.shape}")
        return arr

    layers = []
    for i, entry in enumerate(spec["layers"]):
        kind = entry.get("type")
        lid = entry.get("id", f"layer{i}")
        if kind == "conv2d":
            layers.append(Conv2d(
                lid, load_ref(entry, "weight"), bias=load_ref(entry, "bias", required=False),
                stride=_pair(entry.get("stride", 1), "stride"),
                padding=_pair(entry.get("padding", 0), "padding"),
                groups=int(entry.get("groups", 1)),
            ))
        elif kind == "batchnorm":
            layers.append(BatchNorm(
                lid, scale=load_ref(entry, "scale"), shift=load_ref(entry, "shift"),
                mean=load_ref(entry, "mean"), var=load_ref(entry, "var"),
                eps=float(entry.get("eps", 1e-5)),
            ))
        elif kind == "relu":
            layers.append(ReLU(lid))
        elif kind == "maxpool":
            layers.append(MaxPool(lid, kernel=_pair(entry.get("kernel", 2), "kernel"),
                                  stride=_pair(entry.get("stride", entry.get("kernel", 2)), "stride")))
        elif kind == "global_avgpool":
            layers.append(GlobalAvgPool(lid))
        elif kind == "flatten":
            layers.append(Flatten(lid))
        elif kind == "linear":
            layers.append(Linear(lid, load_ref(entry, "weight"), bias=load_ref(entry, "bias", required=False)))
        elif kind == "residual_begin":
            layers.append(ResidualBegin(lid))
        elif kind == "residual_add":
            layers.append(ResidualAdd(lid))
        else:
            raise ValueError(f"unsupported layer type {kind!r} (id {lid!r})")

    graph = ModelGraph(
        name=spec.get("name", path.stem),
        class_count=int(spec["class_count"]),
        input_shape=tuple(int(v) for v in spec["input_shape"]),
        layers=layers,
    )
    validate(graph)
    return graph
