"""Regenerate the golden model fixtures next to this script.

Run from the repository root:

    python tests/data/gen_golden.py

Writes golden_float.bmx and golden_packed.bmx, then prints their
sha256 digests plus a frozen forward-pass probe. If the digests move,
the on-disk format changed and tests/test_modelio.py must be updated
deliberately, not silently.
"""

import hashlib
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[2] / "src"))

from bitnn import layers, modelio

HERE = pathlib.Path(__file__).resolve().parent
SEED = 20240615


def build_golden_net():
    rng = np.random.default_rng(SEED)
    stack = [
        layers.Conv2d(1, 4, (3, 3), (1, 1), (1, 1), bias=True, rng=rng),
        layers.Tanh(),
        layers.MaxPool2d((2, 2), (2, 2)),
        layers.BatchNorm(4),
        layers.QActivation(1),
        layers.QConv2d(4, 8, (3, 3), bits=1, rng=rng),
        layers.MaxPool2d((2, 2), (2, 2)),
        layers.BatchNorm(8),
        layers.Flatten(),
        layers.QActivation(1),
        layers.QDense(32, 16, bits=1, rng=rng),
        layers.BatchNorm(16),
        layers.Tanh(),
        layers.Dense(16, 3, bias=True, rng=rng),
    ]
    net = layers.Network(stack, (1, 12, 12))
    for layer in stack:
        if isinstance(layer, layers.BatchNorm):
            c = layer.channels
            layer.gamma = (0.5 + rng.random(c)).astype(np.float32)
            layer.beta = rng.standard_normal(c).astype(np.float32) * 0.1
            layer.running_mean = rng.standard_normal(c).astype(np.float32) * 0.05
            layer.running_var = (0.5 + rng.random(c)).astype(np.float32)
    net.layers[-1].bias = rng.standard_normal(3).astype(np.float32) * 0.1
    return net


def probe_input():
    rng = np.random.default_rng(SEED + 1)
    return rng.standard_normal((2, 1, 12, 12)).astype(np.float32)


def main():
    net = build_golden_net()
    float_path = HERE / "golden_float.bmx"
    packed_path = HERE / "golden_packed.bmx"
    modelio.save_model(net, float_path)
    modelio.convert(float_path, packed_path)

    for path in (float_path, packed_path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{path.name}: {path.stat().st_size} bytes sha256={digest}")

    probs = modelio.load_model(float_path).forward(probe_input(), layers.INFER_FLOAT)
    print("float probs[0]:", [float(f"{v:.8f}") for v in probs[0]])
    packed_net = modelio.load_model(packed_path)
    probs_p = packed_net.forward(probe_input(), layers.INFER_PACKED)
    print("packed probs[0]:", [float(f"{v:.8f}") for v in probs_p[0]])
    w = modelio.load_model(float_path).layers[0].weight
    print("conv w[0,0,0,:]:", w[0, 0, 0, :].tolist())


if __name__ == "__main__":
    main()
