"""Model serialization: one container for float and bit-packed weights.

Layout (all integers little-endian):

    magic "BMX1" | version u32 | arch_len u32 | arch JSON (UTF-8)
    tensor_count u32
    per tensor:
        name_len u16 | name (UTF-8)
        dtype u8 (0 = float32, 1 = packed 1-bit)
        ndim u8 | dims, ndim x u64
        payload

A float32 payload is ``4 * prod(dims)`` bytes. A packed payload stores a
[rows, cols] sign matrix as ``8 * rows * ceil(cols / 64)`` bytes of
64-bit words (row-major, LSB-first, 0-filled tails); dims keep the
logical rows and cols. The arch JSON fully describes the layer stack,
so a reader can size every tensor before touching the payloads.

``convert`` rewrites a float model with every 1-bit layer packed, which
shrinks those layers by exactly 32x (modulo tail padding) and drops the
float masters. Converted models serve ``infer_packed`` only.
"""

import json
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bitpack import BitMatrix, audit_padding, words_per_bits
from .layers import (
    INFER_FLOAT,
    INFER_PACKED,
    LAYER_KINDS,
    BatchNorm,
    Conv2d,
    Dense,
    Network,
    QConv2d,
    QDense,
)

MAGIC = b"BMX1"
VERSION = 1
DTYPE_F32 = 0
DTYPE_PACKED1 = 1


class ModelFormatError(Exception):
    """The bytes on disk do not form a valid model file."""


def _weight_shape(layer):
    if isinstance(layer, (Conv2d, QConv2d)):
        kh, kw = layer.kernel
        return (layer.filters, layer.in_channels, kh, kw)
    return (layer.units, layer.in_features)


def _packed_dims(layer):
    if isinstance(layer, QConv2d):
        return (layer.filters, layer.k_reduce)
    return (layer.units, layer.in_features)


def _expected_fields(layer):
    """field name -> (allows_packed, float_shape) for one layer."""
    fields = {}
    if isinstance(layer, (Conv2d, Dense)):
        fields["weight"] = (False, _weight_shape(layer))
        if layer.bias is not None:
            fields["bias"] = (False, (_weight_shape(layer)[0],))
    elif isinstance(layer, (QConv2d, QDense)):
        fields["weight"] = (True, _weight_shape(layer))
    elif isinstance(layer, BatchNorm):
        shape = (layer.channels,)
        for name in ("gamma", "beta", "running_mean", "running_var"):
            fields[name] = (False, shape)
    return fields


def _tensor_entries(net: Network):
    """Deterministic (name, dtype, payload) sequence for serialization."""
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (QConv2d, QDense)) and layer.weight is None:
            if layer.packed is None:
                raise ModelFormatError(
                    f"layer {i} ({layer.kind}) has neither float nor packed weights"
                )
            yield f"layer{i}.weight", DTYPE_PACKED1, layer.packed
            continue
        for name, arr in layer.params():
            yield f"layer{i}.{name}", DTYPE_F32, arr
        for name, arr in layer.buffers():
            yield f"layer{i}.{name}", DTYPE_F32, arr


def _arch_json(net: Network) -> bytes:
    arch = {
        "input_shape": list(net.input_shape),
        "layers": [layer.spec() for layer in net.layers],
        "head": net.head.spec(),
    }
    return json.dumps(arch, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(net: Network, path) -> None:
    """Serialize a network; writes a temp file and renames on success."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    arch = _arch_json(net)
    chunks.append(struct.pack("<I", len(arch)))
    chunks.append(arch)
    entries = list(_tensor_entries(net))
    chunks.append(struct.pack("<I", len(entries)))
    for name, dtype, payload in entries:
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        if dtype == DTYPE_F32:
            arr = np.ascontiguousarray(payload, dtype="<f4")
            dims = arr.shape
            body = arr.tobytes()
        else:
            dims = (payload.vectors, payload.n_bits)
            body = np.ascontiguousarray(payload.words, dtype="<u8").tobytes()
        chunks.append(struct.pack("<BB", dtype, len(dims)))
        chunks.append(struct.pack(f"<{len(dims)}Q", *dims))
        chunks.append(body)
    blob = b"".join(chunks)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


class _Cursor:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def take(self, n) -> bytes:
        if self.off + n > len(self.buf):
            raise ModelFormatError(
                f"truncated file: wanted {n} bytes at offset {self.off}, "
                f"have {len(self.buf) - self.off}"
            )
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.off


def load_model(path) -> Network:
    """Parse a model file back into a Network, validating as it goes."""
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf)
    if cur.take(4) != MAGIC:
        raise ModelFormatError(f"bad magic; not a {MAGIC.decode()} model file")
    (version,) = cur.unpack("<I")
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version} (expected {VERSION})")
    (arch_len,) = cur.unpack("<I")
    try:
        arch = json.loads(cur.take(arch_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"arch descriptor is not valid JSON: {exc}") from None

    for key in ("input_shape", "layers"):
        if key not in arch:
            raise ModelFormatError(f"arch descriptor missing {key!r}")
    head_kind = arch.get("head", {}).get("kind", "softmax")
    if head_kind != "softmax":
        raise ModelFormatError(f"unknown head kind {head_kind!r}")
    layers = []
    for spec in arch["layers"]:
        kind = spec.get("kind")
        if kind not in LAYER_KINDS:
            raise ModelFormatError(f"unknown layer kind {kind!r}")
        layers.append(LAYER_KINDS[kind].from_spec(spec))
    net = Network(layers, arch["input_shape"])

    expected = [_expected_fields(layer) for layer in layers]
    seen = set()
    (count,) = cur.unpack("<I")
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        dtype, ndim = cur.unpack("<BB")
        dims = cur.unpack(f"<{ndim}Q")
        prefix, _, fieldname = name.partition(".")
        if not prefix.startswith("layer"):
            raise ModelFormatError(f"unrecognized tensor name {name!r}")
        try:
            idx = int(prefix[5:])
        except ValueError:
            raise ModelFormatError(f"unrecognized tensor name {name!r}") from None
        if not (0 <= idx < len(layers)) or fieldname not in expected[idx]:
            raise ModelFormatError(f"tensor {name!r} does not match the arch descriptor")
        if name in seen:
            raise ModelFormatError(f"duplicate tensor {name!r}")
        seen.add(name)
        allows_packed, want_shape = expected[idx][fieldname]
        layer = layers[idx]
        if dtype == DTYPE_F32:
            if tuple(dims) != want_shape:
                raise ModelFormatError(
                    f"tensor {name!r} has dims {tuple(dims)}, arch expects {want_shape}"
                )
            n = int(np.prod(dims, dtype=np.int64)) if dims else 1
            arr = np.frombuffer(cur.take(4 * n), dtype="<f4").reshape(dims).copy()
            setattr(layer, fieldname, arr)
        elif dtype == DTYPE_PACKED1:
            if not allows_packed:
                raise ModelFormatError(f"tensor {name!r} cannot be bit-packed")
            if tuple(dims) != _packed_dims(layer):
                raise ModelFormatError(
                    f"tensor {name!r} has dims {tuple(dims)}, arch expects {_packed_dims(layer)}"
                )
            rows, cols = (int(d) for d in dims)
            wpk = words_per_bits(cols)
            raw = cur.take(8 * rows * wpk)
            words = np.frombuffer(raw, dtype="<u8").reshape(rows, wpk).copy()
            bm = BitMatrix(words=words, vectors=rows, n_bits=cols, layout="a", pad_fill=0)
            try:
                audit_padding(bm)
            except ValueError as exc:
                raise ModelFormatError(f"tensor {name!r}: {exc}") from None
            layer.packed = bm
        else:
            raise ModelFormatError(f"unknown tensor dtype code {dtype}")
    if cur.remaining:
        raise ModelFormatError(f"{cur.remaining} trailing bytes after last tensor")

    for idx, fields in enumerate(expected):
        for fieldname in fields:
            if f"layer{idx}.{fieldname}" not in seen:
                raise ModelFormatError(f"missing tensor layer{idx}.{fieldname}")
    return net


@dataclass
class CompressionReport:
    bytes_before: int
    bytes_after: int
    layers: list = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.bytes_before / self.bytes_after if self.bytes_after else float("inf")


def convert(in_path, out_path) -> CompressionReport:
    """Pack a trained float model's 1-bit layers and write the result.

    The input must still hold float weights for every quantized layer;
    converting an already converted file is an error. Weight tensors of
    quantized layers must be finite.
    """
    net = load_model(in_path)
    qlayers = net.quantized_layers
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (QConv2d, QDense)):
            if layer.weight is None:
                raise ModelFormatError(
                    f"layer {i} is already packed; input must be a float model"
                )
            if not np.all(np.isfinite(layer.weight)):
                raise ModelFormatError(f"layer {i} has non-finite weights")
    if not qlayers:
        warnings.warn("model has no quantized layers; convert will not shrink it")
    report = CompressionReport(bytes_before=os.path.getsize(in_path), bytes_after=0)
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (QConv2d, QDense)):
            bm = layer.pack()
            float_bytes = 4 * int(np.prod(_weight_shape(layer)))
            report.layers.append(
                {
                    "name": f"layer{i}.weight",
                    "float_bytes": float_bytes,
                    "packed_bytes": bm.nbytes,
                    "ratio": float_bytes / bm.nbytes,
                }
            )
            layer.weight = None
    save_model(net, out_path)
    report.bytes_after = os.path.getsize(out_path)
    return report


def verify_equivalence(float_net: Network, packed_net: Network,
                       n_samples: int = 16, seed: int = 0, atol: float = 1e-5) -> bool:
    """Check that packed inference reproduces the float forward pass.

    Runs both networks on ``n_samples`` random inputs; quantized layer
    outputs must match exactly (they are the same integers) and final
    probabilities must agree within ``atol``. ``n_samples == 0`` is
    vacuously true and warns.
    """
    if n_samples == 0:
        warnings.warn("verify_equivalence called with n_samples=0; nothing was checked")
        return True
    if float_net.input_shape != packed_net.input_shape or len(float_net.layers) != len(
        packed_net.layers
    ):
        raise ValueError("networks have different architectures")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, *float_net.input_shape)).astype(np.float32)
    cap_f, cap_p = [], []
    probs_f = float_net.forward(x, INFER_FLOAT, capture=cap_f)
    probs_p = packed_net.forward(x, INFER_PACKED, capture=cap_p)
    for i, layer in enumerate(float_net.layers):
        if isinstance(layer, (QConv2d, QDense)):
            if not np.array_equal(cap_f[i], cap_p[i]):
                return False
    return bool(np.allclose(probs_f, probs_p, atol=atol, rtol=0.0))
