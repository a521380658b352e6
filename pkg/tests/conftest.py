import json

import numpy as np
import pytest

from tdc import tensor


def philox(seed):
    return np.random.Generator(np.random.Philox(key=seed))


@pytest.fixture
def rng():
    return philox(20240601)


def write_toy_manifest(root, conv_shapes, input_hw=8, class_count=10, seed=7,
                       strides=None, paddings=None, name="toy"):
    """Build a sequential conv net manifest: conv(+relu) chain, gap, linear.

    ``conv_shapes`` are (C, H, W, T) tuples; consecutive C must match the
    previous T. Returns the manifest path.
    """
    g = philox(seed)
    tensors = root / "tensors"
    tensors.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, shape in enumerate(conv_shapes):
        c, kh, kw, t = shape
        w = g.standard_normal(shape) * (1.5 / np.sqrt(c * kh * kw))
        b = g.standard_normal(t) * 0.05
        tensor.write_tensor(tensors / f"conv{i}.tdt", w)
        tensor.write_tensor(tensors / f"conv{i}_b.tdt", b)
        stride = 1 if strides is None else strides[i]
        pad = (kh // 2) if paddings is None else paddings[i]
        layers.append({"id": f"conv{i}", "type": "conv2d", "weight": f"tensors/conv{i}.tdt",
                       "shape": list(shape), "bias": f"tensors/conv{i}_b.tdt",
                       "stride": stride, "padding": pad})
        layers.append({"id": f"relu{i}", "type": "relu"})
    t_last = conv_shapes[-1][3]
    wl = g.standard_normal((t_last, class_count)) * 0.3
    bl = g.standard_normal(class_count) * 0.05
    tensor.write_tensor(tensors / "fc.tdt", wl)
    tensor.write_tensor(tensors / "fc_b.tdt", bl)
    layers += [{"id": "gap", "type": "global_avgpool"},
               {"id": "fc", "type": "linear", "weight": "tensors/fc.tdt", "bias": "tensors/fc_b.tdt"}]
    manifest = {"name": name, "class_count": class_count,
                "input_shape": [conv_shapes[0][0], input_hw, input_hw], "layers": layers}
    path = root / "model.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path
