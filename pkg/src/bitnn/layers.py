"""Network layers with a float training path and a bit-packed inference path.

Every layer supports three modes:

* ``train_float``: float forward that caches what backward needs.
* ``infer_float``: the same arithmetic without caches; quantized layers
  binarize weights on the fly.
* ``infer_packed``: quantized layers run the xnor/popcount kernels on
  their packed weights instead.

The float and packed paths of a 1-bit layer agree exactly, not just
approximately: both produce the popcount-domain value (dot + K) / 2,
whose terms are small integers that float32 represents without error.
Keeping the binary layers in the popcount domain costs nothing because
each is followed by a BatchNorm, which absorbs any affine change of
variables.

Gradients for quantized pieces use the straight-through estimator:
sign/quantize act as identity in the backward pass, gated to zero where
the forward input's magnitude exceeded 1.
"""

import numba
import numpy as np

from . import qmath
from .bitpack import binarize, pack_matrix_a, pack_matrix_b
from .gemm import xnor_gemm_parallel
from .tensor import col2im, conv_output_hw, im2col

TRAIN_FLOAT = "train_float"
INFER_FLOAT = "infer_float"
INFER_PACKED = "infer_packed"
MODES = (TRAIN_FLOAT, INFER_FLOAT, INFER_PACKED)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class ModeError(RuntimeError):
    """A layer was asked to run in a mode its current state cannot serve."""


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


def _uniform_init(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    kind = "?"

    def params(self):
        """(name, array) pairs of trainable parameters."""
        return []

    def buffers(self):
        """(name, array) pairs of non-trainable state that persists to disk."""
        return []

    def spec(self) -> dict:
        return {"kind": self.kind}

    def forward(self, x, mode=INFER_FLOAT):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def post_update(self):
        """Hook run after each optimizer step."""

    def clear_cache(self):
        pass


class Conv2d(Layer):
    """Full-precision convolution, lowered to GEMM through im2col."""

    kind = "conv"

    def __init__(self, in_channels, filters, kernel, stride=(1, 1), pad=(0, 0),
                 bias=True, rng=None):
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.pad = tuple(pad)
        kh, kw = self.kernel
        fan_in = in_channels * kh * kw
        fan_out = filters * kh * kw
        if rng is not None:
            self.weight = _uniform_init(rng, (filters, in_channels, kh, kw), fan_in, fan_out)
        else:
            self.weight = np.zeros((filters, in_channels, kh, kw), dtype=np.float32)
        self.bias = np.zeros(filters, dtype=self.weight.dtype) if bias else None
        self.grads = {}
        self.need_input_grad = True
        self._cache = None

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def spec(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "filters": self.filters,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "pad": list(self.pad),
            "bias": self.bias is not None,
        }

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["in_channels"], spec["filters"], spec["kernel"],
                   spec["stride"], spec["pad"], spec["bias"])

    def _flat_weight(self):
        return self.weight.reshape(self.filters, -1)

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        b = x.shape[0]
        kh, kw = self.kernel
        oh, ow = conv_output_hw(x.shape[2], x.shape[3], kh, kw, self.stride, self.pad)
        cols = im2col(x, kh, kw, self.stride, self.pad)
        out = self._flat_weight() @ cols
        if self.bias is not None:
            out = out + self.bias[:, None]
        if mode == TRAIN_FLOAT:
            self._cache = (cols, x.shape)
        return out.reshape(self.filters, b, oh, ow).transpose(1, 0, 2, 3)

    def backward(self, dy):
        cols, x_shape = self._cache
        dy_flat = dy.transpose(1, 0, 2, 3).reshape(self.filters, -1)
        self.grads["weight"] = (dy_flat @ cols.T).reshape(self.weight.shape)
        if self.bias is not None:
            self.grads["bias"] = dy_flat.sum(axis=1)
        if not self.need_input_grad:
            return None
        kh, kw = self.kernel
        dcols = self._flat_weight().T @ dy_flat
        return col2im(dcols, x_shape, kh, kw, self.stride, self.pad)

    def clear_cache(self):
        self._cache = None


class QConv2d(Layer):
    """Convolution whose weights are quantized to ``bits`` in the forward pass.

    At one bit the float path emits popcount-domain outputs
    ``(dot + K) / 2`` with K = in_channels * kh * kw, exactly what the
    packed kernel computes, so swapping paths never changes a value. The
    master weights stay in float for SGD and are clamped to [-1, 1]
    after each step to keep them inside the straight-through window.
    """

    kind = "qconv"

    def __init__(self, in_channels, filters, kernel, stride=(1, 1), pad=(0, 0),
                 bits=1, rng=None):
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.pad = tuple(pad)
        if self.pad != (0, 0):
            # zero padding injects values the sign domain cannot express
            raise ValueError("quantized convolution does not support padding")
        self.bits = int(bits)
        qmath.QuantSpec(self.bits)
        kh, kw = self.kernel
        self.k_reduce = in_channels * kh * kw
        fan_in = self.k_reduce
        fan_out = filters * kh * kw
        if rng is not None:
            self.weight = _uniform_init(rng, (filters, in_channels, kh, kw), fan_in, fan_out)
        else:
            self.weight = None
        self.packed = None
        self.grads = {}
        self.need_input_grad = True
        self._cache = None

    def params(self):
        return [("weight", self.weight)] if self.weight is not None else []

    def spec(self):
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "filters": self.filters,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "pad": list(self.pad),
            "bits": self.bits,
        }

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["in_channels"], spec["filters"], spec["kernel"],
                   spec["stride"], spec["pad"], spec["bits"])

    def pack(self):
        """Freeze sign(weight) into packed words for ``infer_packed``."""
        if self.bits != 1:
            raise ModeError("packed inference supports 1-bit weights only")
        if self.weight is None:
            raise ModeError("no float weights to pack")
        wq = binarize(self.weight.reshape(self.filters, self.k_reduce))
        self.packed = pack_matrix_a(wq)
        return self.packed

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        b = x.shape[0]
        kh, kw = self.kernel
        oh, ow = conv_output_hw(x.shape[2], x.shape[3], kh, kw, self.stride, self.pad)
        cols = im2col(x, kh, kw, self.stride, self.pad)
        if mode == INFER_PACKED:
            if self.bits != 1:
                raise ModeError("packed inference supports 1-bit weights only")
            if self.packed is None:
                raise ModeError("layer has no packed weights; pack() or load a converted model")
            out = xnor_gemm_parallel(self.packed, pack_matrix_b(cols))
        else:
            if self.weight is None:
                raise ModeError("layer holds packed weights only; float modes unavailable")
            wq = qmath.quantize_signed(self.weight.reshape(self.filters, -1), self.bits)
            dot = wq @ cols
            out = (dot + self.k_reduce) * 0.5 if self.bits == 1 else dot
            if mode == TRAIN_FLOAT:
                self._cache = (cols, x.shape, wq)
        return out.reshape(self.filters, b, oh, ow).transpose(1, 0, 2, 3)

    def backward(self, dy):
        cols, x_shape, wq = self._cache
        dy_flat = dy.transpose(1, 0, 2, 3).reshape(self.filters, -1)
        ddot = dy_flat * 0.5 if self.bits == 1 else dy_flat
        dwq = (ddot @ cols.T).reshape(self.weight.shape)
        self.grads["weight"] = qmath.ste_backward(dwq, self.weight)
        if not self.need_input_grad:
            return None
        kh, kw = self.kernel
        dcols = wq.T @ ddot
        return col2im(dcols, x_shape, kh, kw, self.stride, self.pad)

    def post_update(self):
        np.clip(self.weight, -1.0, 1.0, out=self.weight)

    def clear_cache(self):
        self._cache = None


class Dense(Layer):
    """Full-precision linear layer: y = x W^T + b."""

    kind = "fc"

    def __init__(self, in_features, units, bias=True, rng=None):
        self.in_features = in_features
        self.units = units
        if rng is not None:
            self.weight = _uniform_init(rng, (units, in_features), in_features, units)
        else:
            self.weight = np.zeros((units, in_features), dtype=np.float32)
        self.bias = np.zeros(units, dtype=self.weight.dtype) if bias else None
        self.grads = {}
        self._cache = None

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def spec(self):
        return {
            "kind": self.kind,
            "in_features": self.in_features,
            "units": self.units,
            "bias": self.bias is not None,
        }

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["in_features"], spec["units"], spec["bias"])

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        if mode == TRAIN_FLOAT:
            self._cache = x
        y = x @ self.weight.T
        if self.bias is not None:
            y = y + self.bias
        return y

    def backward(self, dy):
        x = self._cache
        self.grads["weight"] = dy.T @ x
        if self.bias is not None:
            self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.weight

    def clear_cache(self):
        self._cache = None


class QDense(Layer):
    """Linear layer with ``bits``-quantized weights; packs like QConv2d."""

    kind = "qfc"

    def __init__(self, in_features, units, bits=1, rng=None):
        self.in_features = in_features
        self.units = units
        self.bits = int(bits)
        qmath.QuantSpec(self.bits)
        if rng is not None:
            self.weight = _uniform_init(rng, (units, in_features), in_features, units)
        else:
            self.weight = None
        self.packed = None
        self.grads = {}
        self._cache = None

    def params(self):
        return [("weight", self.weight)] if self.weight is not None else []

    def spec(self):
        return {
            "kind": self.kind,
            "in_features": self.in_features,
            "units": self.units,
            "bits": self.bits,
        }

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["in_features"], spec["units"], spec["bits"])

    def pack(self):
        if self.bits != 1:
            raise ModeError("packed inference supports 1-bit weights only")
        if self.weight is None:
            raise ModeError("no float weights to pack")
        self.packed = pack_matrix_a(binarize(self.weight))
        return self.packed

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        if mode == INFER_PACKED:
            if self.bits != 1:
                raise ModeError("packed inference supports 1-bit weights only")
            if self.packed is None:
                raise ModeError("layer has no packed weights; pack() or load a converted model")
            out = xnor_gemm_parallel(self.packed, pack_matrix_b(x.T))
            return out.T
        if self.weight is None:
            raise ModeError("layer holds packed weights only; float modes unavailable")
        wq = qmath.quantize_signed(self.weight, self.bits)
        dot = x @ wq.T
        y = (dot + self.in_features) * 0.5 if self.bits == 1 else dot
        if mode == TRAIN_FLOAT:
            self._cache = (x, wq)
        return y

    def backward(self, dy):
        x, wq = self._cache
        ddot = dy * 0.5 if self.bits == 1 else dy
        self.grads["weight"] = qmath.ste_backward(ddot.T @ x, self.weight)
        return ddot @ wq

    def post_update(self):
        np.clip(self.weight, -1.0, 1.0, out=self.weight)

    def clear_cache(self):
        self._cache = None


class QActivation(Layer):
    """Quantizes activations to ``bits`` (sign at 1 bit); STE backward."""

    kind = "qactivation"

    def __init__(self, bits=1):
        self.bits = int(bits)
        qmath.QuantSpec(self.bits)
        self._cache = None

    def spec(self):
        return {"kind": self.kind, "bits": self.bits}

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["bits"])

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        if mode == TRAIN_FLOAT:
            self._cache = x
        return qmath.quantize_signed(x, self.bits)

    def backward(self, dy):
        return qmath.ste_backward(dy, self._cache)

    def clear_cache(self):
        self._cache = None


class Tanh(Layer):
    kind = "tanh"

    def __init__(self):
        self._cache = None

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        y = np.tanh(x)
        if mode == TRAIN_FLOAT:
            self._cache = y
        return y

    def backward(self, dy):
        y = self._cache
        t = np.square(y)
        np.subtract(1.0, t, out=t)
        np.multiply(dy, t, out=t)
        return t

    @classmethod
    def from_spec(cls, spec):
        return cls()

    def clear_cache(self):
        self._cache = None


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    @classmethod
    def from_spec(cls, spec):
        return cls()


@numba.njit(cache=True, nogil=True)
def _maxpool_fwd(x, y, idx, kh, kw):
    b, c, h, w = x.shape
    oh = h // kh
    ow = w // kw
    for bi in range(b):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[bi, ci, oy * kh, ox * kw]
                    at = np.uint8(0)
                    for i in range(kh):
                        for j in range(kw):
                            v = x[bi, ci, oy * kh + i, ox * kw + j]
                            if v > best:
                                best = v
                                at = np.uint8(i * kw + j)
                    y[bi, ci, oy, ox] = best
                    idx[bi, ci, oy, ox] = at


@numba.njit(cache=True, nogil=True)
def _maxpool_bwd(dy, dx, idx, kh, kw):
    b, c, oh, ow = dy.shape
    for bi in range(b):
        for ci in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    at = idx[bi, ci, oy, ox]
                    dx[bi, ci, oy * kh + at // kw, ox * kw + at % kw] = dy[bi, ci, oy, ox]


class MaxPool2d(Layer):
    """Non-overlapping max pooling; backward routes to the first maximum."""

    kind = "maxpool"

    def __init__(self, kernel=(2, 2), stride=(2, 2)):
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        if self.kernel != self.stride:
            raise ValueError("pooling windows must tile the input (kernel == stride)")
        self._cache = None

    def spec(self):
        return {"kind": self.kind, "kernel": list(self.kernel), "stride": list(self.stride)}

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["kernel"], spec["stride"])

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        b, c, h, w = x.shape
        kh, kw = self.kernel
        if h % kh or w % kw:
            raise ValueError(f"input {h}x{w} not divisible by pool {kh}x{kw}")
        x = np.ascontiguousarray(x)
        y = np.empty((b, c, h // kh, w // kw), dtype=x.dtype)
        idx = np.empty(y.shape, dtype=np.uint8)
        _maxpool_fwd(x, y, idx, kh, kw)
        if mode == TRAIN_FLOAT:
            self._cache = (idx, x.shape)
        return y

    def backward(self, dy):
        idx, x_shape = self._cache
        kh, kw = self.kernel
        dx = np.zeros(x_shape, dtype=dy.dtype)
        _maxpool_bwd(np.ascontiguousarray(dy), dx, idx, kh, kw)
        return dx

    def clear_cache(self):
        self._cache = None


class BatchNorm(Layer):
    """Batch normalization over the channel axis of [B, C, H, W] or [B, D].

    Train mode normalizes with biased batch statistics and folds them
    into the running averages (keep 0.9 of the old value); both
    inference modes use the running statistics only.
    """

    kind = "batchnorm"

    def __init__(self, channels, eps=BN_EPS, momentum=BN_MOMENTUM):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(channels, dtype=np.float32)
        self.beta = np.zeros(channels, dtype=np.float32)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.grads = {}
        self._cache = None

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def spec(self):
        return {"kind": self.kind, "channels": self.channels,
                "eps": self.eps, "momentum": self.momentum}

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["channels"], spec["eps"], spec["momentum"])

    def _axes_and_shape(self, x):
        if x.ndim == 4:
            return (0, 2, 3), (1, self.channels, 1, 1)
        if x.ndim == 2:
            return (0,), (1, self.channels)
        raise ValueError(f"batchnorm expects 2-D or 4-D input, got ndim={x.ndim}")

    def forward(self, x, mode=INFER_FLOAT):
        _check_mode(mode)
        axes, shape = self._axes_and_shape(x)
        if mode == TRAIN_FLOAT:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean[:] = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var[:] = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        if mode == TRAIN_FLOAT:
            self._cache = (xhat, inv_std, axes, shape)
        return self.gamma.reshape(shape) * xhat + self.beta.reshape(shape)

    def backward(self, dy):
        xhat, inv_std, axes, shape = self._cache
        count = dy.size // self.channels
        self.grads["gamma"] = (dy * xhat).sum(axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        dxhat = dy * self.gamma.reshape(shape)
        # Biased batch statistics make the three-term gradient collapse to
        # this closed form.
        term = (
            dxhat
            - dxhat.mean(axis=axes).reshape(shape)
            - xhat * (dxhat * xhat).mean(axis=axes).reshape(shape)
        )
        return term * inv_std.reshape(shape)

    def clear_cache(self):
        self._cache = None


class SoftmaxOutput(Layer):
    """Softmax head; cross-entropy loss and its logits gradient."""

    kind = "softmax"

    def __init__(self):
        self._cache = None

    def forward(self, logits, mode=INFER_FLOAT):
        _check_mode(mode)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        if mode == TRAIN_FLOAT:
            self._cache = log_probs
        return np.exp(log_probs)

    @classmethod
    def from_spec(cls, spec):
        return cls()

    def loss_and_grad(self, labels):
        """Mean cross entropy of the cached forward and d(loss)/d(logits)."""
        log_probs = self._cache
        n = log_probs.shape[0]
        labels = np.asarray(labels)
        loss = float(-log_probs[np.arange(n), labels].mean())
        dlogits = np.exp(log_probs)
        dlogits[np.arange(n), labels] -= 1.0
        return loss, dlogits / n

    def clear_cache(self):
        self._cache = None


LAYER_KINDS = {
    cls.kind: cls
    for cls in (Conv2d, QConv2d, Dense, QDense, QActivation, Tanh, Flatten,
                MaxPool2d, BatchNorm, SoftmaxOutput)
}


class Network:
    """A feed-forward stack with a softmax head and SGD training."""

    def __init__(self, layers, input_shape, head=None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.head = head if head is not None else SoftmaxOutput()
        self._velocity = {}
        if self.layers and isinstance(self.layers[0], (Conv2d, QConv2d)):
            self.layers[0].need_input_grad = False

    @property
    def quantized_layers(self):
        return [l for l in self.layers if isinstance(l, (QConv2d, QDense))]

    def forward(self, x, mode=INFER_FLOAT, capture=None):
        """Probabilities for a batch; ``capture`` collects per-layer outputs."""
        _check_mode(mode)
        for layer in self.layers:
            x = layer.forward(x, mode)
            if capture is not None:
                capture.append(x)
        return self.head.forward(x, mode)

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params():
                yield (i, name), layer, arr

    def train_step(self, x, labels, lr, momentum=0.9):
        """One forward/backward/update pass; returns the batch loss.

        Raises FloatingPointError if the loss or any gradient is
        non-finite so callers can stop before the model corrupts itself.
        """
        self.forward(x, TRAIN_FLOAT)
        loss, dy = self.head.loss_and_grad(labels)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training loss is non-finite ({loss})")
        for i in range(len(self.layers) - 1, -1, -1):
            dy = self.layers[i].backward(dy)
        for key, layer, _ in self.named_params():
            g = layer.grads[key[1]]
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(
                    f"non-finite gradient for layer {key[0]} ({layer.kind}) param {key[1]}"
                )
        self.sgd_step(lr, momentum)
        return loss

    def sgd_step(self, lr, momentum=0.9):
        """Momentum SGD: v <- momentum v - lr g; w <- w + v."""
        for key, layer, arr in self.named_params():
            g = layer.grads.get(key[1])
            if g is None:
                continue
            v = self._velocity.get(key)
            if v is None:
                v = np.zeros_like(arr)
                self._velocity[key] = v
            v *= momentum
            v -= lr * g
            arr += v
        for layer in self.layers:
            layer.post_update()

    def pack_for_inference(self):
        """Pack every 1-bit layer's weights; enables ``infer_packed``."""
        for layer in self.quantized_layers:
            layer.pack()

    def predict(self, x, mode=INFER_FLOAT):
        return self.forward(x, mode)

    def state_arrays(self):
        """All persistent arrays in a deterministic order (params + buffers)."""
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in list(layer.params()) + list(layer.buffers()):
                out.append(((i, name), arr))
        return out

    def snapshot(self):
        return [(key, arr.copy()) for key, arr in self.state_arrays()]

    def restore(self, snap):
        for (key, arr), (skey, saved) in zip(self.state_arrays(), snap):
            if key != skey:
                raise ValueError("snapshot does not match network structure")
            arr[...] = saved

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()
        self.head.clear_cache()


def evaluate(net: Network, images, labels, mode=INFER_FLOAT, batch_size=500) -> float:
    """Top-1 accuracy of the network on a labeled set."""
    hits = 0
    for lo in range(0, len(images), batch_size):
        probs = net.forward(images[lo : lo + batch_size], mode)
        hits += int((probs.argmax(axis=1) == labels[lo : lo + batch_size]).sum())
    return hits / len(images)


def build_lenet(binary: bool, seed: int = 0) -> Network:
    """LeNet-style MNIST classifier, 64 filters per conv and 1000 hidden units.

    ``binary=True`` swaps the two middle weight layers for their 1-bit
    versions and precedes each with a sign activation; the first
    convolution and the classifier stay full precision. ``binary=False``
    builds the same stack with tanh in place of the sign activations, so
    the two variants have identical parameter shapes.
    """
    rng = np.random.default_rng(seed)
    c1 = Conv2d(1, 64, (5, 5), bias=True, rng=rng)
    if binary:
        act1: Layer = QActivation(1)
        conv2: Layer = QConv2d(64, 64, (5, 5), bits=1, rng=rng)
        act2: Layer = QActivation(1)
        fc1: Layer = QDense(64 * 4 * 4, 1000, bits=1, rng=rng)
    else:
        act1 = Tanh()
        conv2 = Conv2d(64, 64, (5, 5), bias=False, rng=rng)
        act2 = Tanh()
        fc1 = Dense(64 * 4 * 4, 1000, bias=False, rng=rng)
    layers = [
        c1,
        Tanh(),
        MaxPool2d(),
        BatchNorm(64),
        act1,
        conv2,
        MaxPool2d(),
        BatchNorm(64),
        Flatten(),
        act2,
        fc1,
        BatchNorm(1000),
        Tanh(),
        Dense(1000, 10, bias=True, rng=rng),
    ]
    return Network(layers, input_shape=(1, 28, 28))
