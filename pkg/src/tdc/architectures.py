"""Decomposable-layer shape registries for the reference architectures.

Shapes are in (C, H, W, T) mode order with C the input and T the output
channel count. Layer numbers follow the source implementations' module
numbering (non-parameterized layers included).
"""

GARIPOVNET = {
    2: (64, 3, 3, 64),
    4: (64, 3, 3, 128),
    6: (128, 3, 3, 128),
    8: (128, 3, 3, 128),
    10: (128, 3, 3, 128),
}

RESNET18 = {
    15: (64, 3, 3, 64),
    19: (64, 3, 3, 128),
    28: (128, 3, 3, 128),
    38: (256, 3, 3, 256),
    41: (128, 1, 1, 256),
    44: (256, 3, 3, 256),
    60: (512, 3, 3, 512),
    63: (512, 3, 3, 512),
}

ARCHITECTURES = {"garipovnet": GARIPOVNET, "resnet18": RESNET18}
