import numpy as np
import pytest

from bitnn import bitpack
from bitnn.bitpack import (
    BitMatrix,
    audit_padding,
    binarize,
    dot_xnor_popcount,
    pack_matrix_a,
    pack_matrix_b,
    pack_row,
    popcount64,
    popcount64_soft,
    unpack_row,
    words_per_bits,
)


def _random_signs(rng, shape, dtype=np.float32):
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0).astype(dtype)


def test_pack_row_frozen_word():
    # [+1,-1,+1,+1] LSB-first: bits 0,2,3 set -> 0b1101 = 13, zero fill.
    words = pack_row(np.array([1.0, -1.0, 1.0, 1.0]), pad_fill=0)
    assert words.dtype == np.uint64
    assert list(words) == [13]
    # same signs with one-fill: the 60 tail bits all set
    words1 = pack_row(np.array([1.0, -1.0, 1.0, 1.0]), pad_fill=1)
    assert list(words1) == [0xFFFFFFFFFFFFFFF0 | 13]


def test_binarize_sign_convention():
    x = np.array([-0.5, 0.0, -0.0, 2.0, -3.0], dtype=np.float32)
    out = binarize(x)
    assert out.dtype == np.float32
    assert list(out) == [-1.0, 1.0, 1.0, 1.0, -1.0]
    assert binarize(np.float64(0.0)) == 1.0
    with pytest.raises(ValueError):
        binarize(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        binarize(np.array([np.inf]))


def test_pack_rejects_non_sign_values():
    with pytest.raises(ValueError):
        pack_row(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        pack_row(np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        pack_matrix_a(np.array([[2.0, 1.0]]))
    with pytest.raises(ValueError):
        pack_matrix_b(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        pack_matrix_a(np.ones(4))  # not 2-D


def test_pack_row_round_trip_odd_lengths():
    rng = np.random.default_rng(2)
    for n in (1, 3, 63, 64, 65, 127, 128, 130, 1000):
        v = _random_signs(rng, n)
        for fill in (0, 1):
            words = pack_row(v, fill)
            assert words.shape == (words_per_bits(n),)
            back = unpack_row(words, n)
            assert np.array_equal(back, v), f"n={n} fill={fill}"


def test_unpack_row_validates_word_count():
    with pytest.raises(ValueError):
        unpack_row(np.zeros(2, dtype=np.uint64), 64)
    with pytest.raises(ValueError):
        unpack_row(np.zeros((1, 1), dtype=np.uint64), 4)


def test_matrix_pack_layouts_and_round_trip():
    rng = np.random.default_rng(4)
    for m, k in ((1, 1), (5, 64), (7, 65), (32, 200), (3, 1000)):
        mat = _random_signs(rng, (m, k))
        a = pack_matrix_a(mat)
        assert (a.layout, a.pad_fill) == ("a", 0)
        assert a.words.shape == (m, words_per_bits(k))
        assert a.vectors == m and a.n_bits == k
        assert np.array_equal(a.unpack(), mat)

        matb = _random_signs(rng, (k, m))
        b = pack_matrix_b(matb)
        assert (b.layout, b.pad_fill) == ("b", 1)
        assert b.words.shape == (words_per_bits(k), m)
        assert b.vectors == m and b.n_bits == k
        assert np.array_equal(b.unpack(), matb)

        # per-vector words agree with the single-row reference packer
        for i in range(m):
            assert np.array_equal(a.vector_words(i), pack_row(mat[i], 0))
            assert np.array_equal(b.vector_words(i), pack_row(matb[:, i], 1))


def test_bitmatrix_validation():
    words = np.zeros((2, 1), dtype=np.uint64)
    with pytest.raises(ValueError):
        BitMatrix(words, vectors=2, n_bits=10, layout="c", pad_fill=0)
    with pytest.raises(ValueError):
        BitMatrix(words, vectors=2, n_bits=10, layout="a", pad_fill=2)
    with pytest.raises(ValueError):
        BitMatrix(words, vectors=3, n_bits=10, layout="a", pad_fill=0)
    with pytest.raises(ValueError):
        BitMatrix(words.astype(np.int64), vectors=2, n_bits=10, layout="a", pad_fill=0)
    # layout b expects the transposed word arrangement
    with pytest.raises(ValueError):
        BitMatrix(words, vectors=2, n_bits=80, layout="b", pad_fill=1)


def test_audit_padding_catches_corruption():
    rng = np.random.default_rng(6)
    a = pack_matrix_a(_random_signs(rng, (4, 70)))
    audit_padding(a)
    b = pack_matrix_b(_random_signs(rng, (70, 4)))
    audit_padding(b)

    bad = pack_matrix_a(_random_signs(rng, (4, 70)))
    bad.words[2, -1] |= np.uint64(1) << np.uint64(70 % 64)
    with pytest.raises(ValueError):
        audit_padding(bad)

    badb = pack_matrix_b(_random_signs(rng, (70, 4)))
    badb.words[-1, 1] &= ~(np.uint64(1) << np.uint64(63))
    with pytest.raises(ValueError):
        audit_padding(badb)

    # exact multiples of the word size have no tail to audit
    full = pack_matrix_a(_random_signs(rng, (2, 128)))
    full.words[:] = rng.integers(0, 2**63, size=full.words.shape, dtype=np.uint64)
    audit_padding(full)


def test_popcount_hardware_matches_software():
    rng = np.random.default_rng(8)
    words = rng.integers(0, 2**64, size=5000, dtype=np.uint64)
    words[:4] = [0, 1, 2**64 - 1, 0x8000000000000000]
    hw = popcount64(words)
    sw = popcount64_soft(words)
    assert np.array_equal(hw, sw)
    # spot-check against Python's arbitrary precision bit counting
    for i in range(200):
        assert int(hw[i]) == int(words[i]).bit_count()


def test_dot_xnor_popcount_matches_float_dot():
    rng = np.random.default_rng(9)
    for n in (1, 7, 64, 65, 129, 500):
        a = _random_signs(rng, n)
        b = _random_signs(rng, n)
        p = dot_xnor_popcount(pack_row(a, 0), pack_row(b, 1), n)
        dot = int(a @ b)
        assert p == (dot + n) // 2
        assert 2 * p - n == dot


def test_dot_xnor_popcount_validates_lengths():
    a = pack_row(np.ones(65), 0)
    b = pack_row(np.ones(64), 1)
    with pytest.raises(ValueError):
        dot_xnor_popcount(a, b, 65)


def test_complementary_padding_cancels_in_whole_word_counts():
    # with a 0-filled and a 1-filled tail, every padding position
    # contributes xnor(0,1) = 0, so no masking is needed
    rng = np.random.default_rng(10)
    n = 70
    a = _random_signs(rng, n)
    b = _random_signs(rng, n)
    aw = pack_row(a, 0)
    bw = pack_row(b, 1)
    raw = int(popcount64(~(aw ^ bw)).sum())
    assert raw == int(np.sum(a == b))


def test_words_per_bits():
    assert [words_per_bits(n) for n in (1, 63, 64, 65, 128, 129)] == [1, 1, 1, 2, 2, 3]
    assert words_per_bits(0) == 0
