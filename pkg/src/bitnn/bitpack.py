"""Bit packing of ±1 matrices into 64-bit words.

A sign value maps to one bit: +1 -> 1, -1 -> 0, packed LSB-first within
each word so that logical column k of a vector lives in word k // 64 at
bit k % 64. Two layouts cover the two GEMM operands:

* layout ``'a'``: left operand, shape [M, K] packs to [M, words_per_k],
  rows padded with 0 bits.
* layout ``'b'``: right operand, shape [K, N] packs to [words_per_k, N],
  columns padded with 1 bits.

The complementary padding makes every tail bit contribute
``xnor(0, 1) == 0`` to a popcount, so kernels may count whole words
without masking. ``audit_padding`` re-checks that invariant on any
packed matrix.
"""

from dataclasses import dataclass

import numpy as np

WORD_BITS = 64

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def binarize(x):
    """Map finite reals to {-1, +1} with sign(0) == +1.

    Preserves a floating input's dtype; non-finite entries raise
    ValueError rather than silently landing on -1 via a NaN compare.
    """
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("binarize requires finite inputs")
    signs = np.where(x >= 0, 1.0, -1.0)
    if np.issubdtype(x.dtype, np.floating):
        return signs.astype(x.dtype, copy=False)
    return signs


def words_per_bits(n_bits: int) -> int:
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def popcount64(words):
    """Per-element popcount of a uint64 array (hardware instruction)."""
    words = np.asarray(words, dtype=np.uint64)
    return np.bitwise_count(words)


def popcount64_soft(words):
    """Pure shift/mask popcount, bit-identical to ``popcount64``.

    Kept as the portable reference for platforms or toolchains without
    a native population count; tests pin the two paths against each
    other.
    """
    x = np.asarray(words, dtype=np.uint64).copy()
    x -= (x >> np.uint64(1)) & _M1
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return ((x * _H01) >> np.uint64(56)).astype(np.uint8)


def _validate_signs(mat) -> np.ndarray:
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={mat.ndim}")
    if not np.all(np.abs(mat) == 1):
        raise ValueError("matrix entries must all be -1 or +1")
    return mat


def _pack_last_axis(bits: np.ndarray, pad_fill: int) -> np.ndarray:
    """Pack a [V, K] boolean matrix to [V, words_per_k] uint64, LSB-first."""
    v, k = bits.shape
    wpk = words_per_bits(k)
    padded_k = wpk * WORD_BITS
    if padded_k != k:
        pad = np.full((v, padded_k - k), bool(pad_fill))
        bits = np.concatenate([bits, pad], axis=1)
    packed = np.packbits(np.ascontiguousarray(bits), axis=1, bitorder="little")
    return packed.view(np.dtype("<u8")).reshape(v, wpk)


@dataclass
class BitMatrix:
    """A ±1 matrix packed into 64-bit words.

    ``vectors`` counts the packed sign vectors (M for layout 'a', N for
    layout 'b'); ``n_bits`` is each vector's logical length K. ``words``
    is [vectors, words_per_k] for layout 'a' and the transposed
    [words_per_k, vectors] for layout 'b', matching how the xnor kernels
    walk memory.
    """

    words: np.ndarray
    vectors: int
    n_bits: int
    layout: str
    pad_fill: int

    def __post_init__(self):
        if self.layout not in ("a", "b"):
            raise ValueError(f"layout must be 'a' or 'b', got {self.layout!r}")
        if self.pad_fill not in (0, 1):
            raise ValueError(f"pad_fill must be 0 or 1, got {self.pad_fill}")
        if self.words.dtype != np.uint64:
            raise ValueError("words must be uint64")
        expect = (
            (self.vectors, self.words_per_vector)
            if self.layout == "a"
            else (self.words_per_vector, self.vectors)
        )
        if self.words.shape != expect:
            raise ValueError(f"words shape {self.words.shape} != expected {expect}")

    @property
    def words_per_vector(self) -> int:
        return words_per_bits(self.n_bits)

    @property
    def nbytes(self) -> int:
        return self.words.size * 8

    def vector_words(self, i: int) -> np.ndarray:
        """The packed words of vector i, regardless of layout."""
        return self.words[i] if self.layout == "a" else self.words[:, i]

    def unpack(self) -> np.ndarray:
        """Reconstruct the ±1 float32 matrix in its original orientation."""
        rows = self.words if self.layout == "a" else np.ascontiguousarray(self.words.T)
        flat = rows.reshape(-1).view(np.uint8) if rows.size else rows.view(np.uint8)
        bits = np.unpackbits(flat, bitorder="little")
        bits = bits.reshape(self.vectors, self.words_per_vector * WORD_BITS)
        signs = np.where(bits[:, : self.n_bits] == 1, 1.0, -1.0).astype(np.float32)
        return signs if self.layout == "a" else signs.T


def pack_matrix_a(mat) -> BitMatrix:
    """Pack a ±1 left operand [M, K] row-wise with 0-filled padding."""
    mat = _validate_signs(mat)
    m, k = mat.shape
    words = _pack_last_axis(mat > 0, pad_fill=0)
    return BitMatrix(words=words, vectors=m, n_bits=k, layout="a", pad_fill=0)


def pack_matrix_b(mat) -> BitMatrix:
    """Pack a ±1 right operand [K, N] column-wise with 1-filled padding.

    Output words are [words_per_k, N] so a kernel's inner loop over N
    reads consecutive memory.
    """
    mat = _validate_signs(mat)
    k, n = mat.shape
    wpk = words_per_bits(k)
    padded_k = wpk * WORD_BITS
    bits = mat > 0
    if padded_k != k:
        bits = np.concatenate([bits, np.ones((padded_k - k, n), dtype=bool)], axis=0)
    packed = np.packbits(np.ascontiguousarray(bits), axis=0, bitorder="little")
    words = np.zeros((wpk, n), dtype=np.uint64)
    for j in range(8):
        words |= packed[j::8].astype(np.uint64) << np.uint64(8 * j)
    return BitMatrix(words=words, vectors=n, n_bits=k, layout="b", pad_fill=1)


def pack_row(values, pad_fill: int = 0) -> np.ndarray:
    """Pack one ±1 vector into uint64 words (LSB-first)."""
    values = np.asarray(values)
    if values.ndim != 1:
        raise ValueError("pack_row expects a 1-D vector")
    if pad_fill not in (0, 1):
        raise ValueError(f"pad_fill must be 0 or 1, got {pad_fill}")
    if values.size == 0:
        return np.zeros(0, dtype=np.uint64)
    _validate_signs(values[None, :])
    return _pack_last_axis(values[None, :] > 0, pad_fill)[0]

def unpack_row(words, n_bits: int) -> np.ndarray:
    """Inverse of ``pack_row``: recover the first n_bits signs as float32."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    if words.ndim != 1:
        raise ValueError("unpack_row expects a 1-D word array")
    if words.size != words_per_bits(n_bits):
        raise ValueError(f"{words.size} words cannot hold {n_bits} bits")
    if n_bits == 0:
        return np.zeros(0, dtype=np.float32)
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")[:n_bits]
    return np.where(bits == 1, 1.0, -1.0).astype(np.float32)


def audit_padding(bm: BitMatrix) -> None:
    """Raise if any tail bit past n_bits disagrees with the pad fill.

    Whole-word popcounts are only exact while layout 'a' tails stay 0 and
    layout 'b' tails stay 1; run this when packed words arrive from disk
    or an untrusted producer.
    """
    rem = bm.n_bits % WORD_BITS
    if rem == 0:
        return
    tail_mask = np.uint64(~((1 << rem) - 1) & 0xFFFFFFFFFFFFFFFF)
    last = bm.words[:, -1] if bm.layout == "a" else bm.words[-1, :]
    tails = last & tail_mask
    expected = tail_mask if bm.pad_fill == 1 else np.uint64(0)
    if not np.all(tails == expected):
        raise ValueError(
            f"padding audit failed: tail bits of layout {bm.layout!r} matrix "
            f"are not all {bm.pad_fill}"
        )


def dot_xnor_popcount(a_words, b_words, n_bits: int) -> int:
    """Popcount-domain dot product of two packed ±1 vectors.

    Returns ``popcount(xnor(a, b))`` over the first n_bits positions,
    an integer in [0, n_bits]. Callers must pass one 0-padded and one
    1-padded vector (the 'a'/'b' packing pair); the complementary tails
    then cancel and whole words can be counted unmasked.
    """
    a_words = np.ascontiguousarray(a_words, dtype=np.uint64)
    b_words = np.ascontiguousarray(b_words, dtype=np.uint64)
    wpk = words_per_bits(n_bits)
    if a_words.shape != (wpk,) or b_words.shape != (wpk,):
        raise ValueError(f"expected {wpk} words per operand for n_bits={n_bits}")
    return int(popcount64(~(a_words ^ b_words)).sum())
