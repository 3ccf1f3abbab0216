"""Quantization arithmetic shared by training and inference.

Two value domains show up throughout this package:

* the signed domain ``[-1, +1]`` used by weights and binary activations,
* the popcount domain ``[0, n]`` produced by xnor/popcount dot products.

``map_dot_to_xnor`` and ``map_xnor_to_dot`` convert between a signed dot
product and its popcount-domain counterpart. ``quantize`` performs linear
k-bit quantization on ``[0, 1]``; ``quantize_signed`` wraps it for the
signed domain and degenerates to ``sign`` at one bit.
"""

from dataclasses import dataclass

import numpy as np

from .bitpack import binarize

MIN_BITS = 1
MAX_BITS = 31


@dataclass(frozen=True)
class QuantSpec:
    """Bit width for a quantized layer.

    Rounding is not configurable: every quantizer in this package rounds
    half away from zero so that results do not depend on the platform's
    banker's rounding.
    """

    bits: int

    def __post_init__(self):
        if not (MIN_BITS <= self.bits <= MAX_BITS):
            raise ValueError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {self.bits}")

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1


def _round_half_away(v):
    # np.round rounds half to even; floor(v + 0.5) gives half away from
    # zero for the non-negative inputs quantize deals with.
    return np.floor(v + 0.5)


def quantize(x, bits: int):
    """Quantize values in [0, 1] to ``2**bits - 1`` evenly spaced levels.

    Grid points are ``i / (2**bits - 1)``; ties round half away from zero.
    Inputs outside [0, 1] raise ValueError, as does ``bits`` outside
    [2, 31] (1-bit callers go through ``quantize_signed``).
    """
    if not (2 <= bits <= MAX_BITS):
        raise ValueError(f"bits must be in [2, {MAX_BITS}], got {bits}")
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("quantize requires finite inputs")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("quantize requires inputs in [0, 1]")
    levels = (1 << bits) - 1
    return _round_half_away(x * levels) / levels


def quantize_signed(x, bits: int):
    """Quantize values to the signed domain [-1, +1] at ``bits`` width.

    At one bit this is exactly ``binarize`` after clamping. For wider
    widths the input is clamped to [-1, 1], shifted to [0, 1], quantized
    on the unsigned grid and shifted back, so 0.0 lands on a positive
    grid point (e.g. 1/3 at two bits), never on 0.
    """
    if not (MIN_BITS <= bits <= MAX_BITS):
        raise ValueError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("quantize_signed requires finite inputs")
    clamped = np.clip(x, -1.0, 1.0)
    if bits == 1:
        return binarize(clamped)
    return 2.0 * quantize(0.5 * clamped + 0.5, bits) - 1.0


def map_dot_to_xnor(dot, n: int):
    """Map a signed dot product over n ±1 pairs to the popcount domain.

    For vectors a, b in {-1, +1}^n the identity
    ``popcount(xnor(a, b)) == (dot(a, b) + n) / 2`` holds; this applies
    the right-hand side. ``dot`` must lie in [-n, n] and have n's parity.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    dot = np.asarray(dot)
    if np.any(np.abs(dot) > n):
        raise ValueError(f"dot product outside [-{n}, {n}]")
    return (dot + n) * 0.5


def map_xnor_to_dot(p, n: int):
    """Inverse of ``map_dot_to_xnor``: popcount p in [0, n] -> 2p - n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = np.asarray(p)
    if np.any(p < 0) or np.any(p > n):
        raise ValueError(f"popcount outside [0, {n}]")
    return 2.0 * p - n


def ste_backward(grad_out, pre_activation):
    """Straight-through gradient for sign/quantize activations.

    Passes the upstream gradient where the forward input had magnitude
    at most 1 and zeros it elsewhere; the comparison is on the input to
    the activation, not its output.
    """
    grad_out = np.asarray(grad_out)
    pre_activation = np.asarray(pre_activation)
    if grad_out.shape != pre_activation.shape:
        raise ValueError("gradient and activation input shapes differ")
    return grad_out * (np.abs(pre_activation) <= 1.0)
