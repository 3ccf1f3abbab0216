import numpy as np
import pytest

from bitnn import qmath
from bitnn.bitpack import binarize, dot_xnor_popcount, pack_row


def test_quantize_frozen_value():
    # 0.4 on the 2-bit grid {0, 1/3, 2/3, 1}: 0.4 * 3 = 1.2 rounds to 1.
    q = qmath.quantize(0.4, 2)
    assert q == 1.0 / 3.0
    assert float(q) * 3 == 1.0


def test_quantize_signed_frozen_value():
    # 0.0 shifts to 0.5 on [0, 1]; 0.5 * 3 = 1.5 rounds half away to 2,
    # giving 2/3, which maps back to 1/3. Zero never lands on zero.
    assert qmath.quantize_signed(0.0, 2) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_quantize_half_away_ties():
    # Tie points i + 0.5 on the 2-bit grid round up (away from zero).
    assert qmath.quantize(1.0 / 6.0, 2) == 1.0 / 3.0
    assert qmath.quantize(0.5, 2) == 2.0 / 3.0
    assert qmath.quantize(5.0 / 6.0, 2) == 1.0


def test_quantize_endpoints_and_grid():
    rng = np.random.default_rng(7)
    for bits in (2, 4, 8, 16):
        levels = (1 << bits) - 1
        assert qmath.quantize(0.0, bits) == 0.0
        assert qmath.quantize(1.0, bits) == 1.0
        x = rng.uniform(0, 1, size=10_000)
        q = qmath.quantize(x, bits)
        # every output sits on the grid i / levels
        scaled = q * levels
        assert np.allclose(scaled, np.round(scaled), atol=1e-9)
        assert q.min() >= 0.0 and q.max() <= 1.0


def test_quantize_idempotent_monotone_bounded():
    rng = np.random.default_rng(11)
    for bits in (2, 4, 8, 16):
        x = np.sort(rng.uniform(0, 1, size=10_000))
        q = qmath.quantize(x, bits)
        assert np.array_equal(qmath.quantize(q, bits), q), "idempotence"
        assert np.all(np.diff(q) >= 0), "monotone on sorted input"
        bound = 1.0 / (2 * ((1 << bits) - 1))
        assert np.abs(q - x).max() <= bound + 1e-12, "half-step error bound"


def test_quantize_rejects_bad_inputs():
    with pytest.raises(ValueError):
        qmath.quantize(-0.01, 2)
    with pytest.raises(ValueError):
        qmath.quantize(1.01, 2)
    with pytest.raises(ValueError):
        qmath.quantize(np.array([0.5, np.nan]), 2)
    for bits in (0, 1, 32):
        with pytest.raises(ValueError):
            qmath.quantize(0.5, bits)


def test_quantize_signed_one_bit_matches_binarize():
    rng = np.random.default_rng(3)
    x = rng.uniform(-3, 3, size=1000)
    x[:5] = [0.0, -0.0, 1.0, -1.0, 2.5]
    expect = binarize(np.clip(x, -1.0, 1.0))
    assert np.array_equal(qmath.quantize_signed(x, 1), expect)
    assert qmath.quantize_signed(0.0, 1) == 1.0


def test_quantize_signed_clamps_and_bounds():
    rng = np.random.default_rng(5)
    for bits in (2, 4, 8):
        x = rng.uniform(-4, 4, size=5000)
        q = qmath.quantize_signed(x, bits)
        assert q.min() >= -1.0 and q.max() <= 1.0
        # signed grid spacing is 2 / levels, so the worst error is 1 / levels
        inside = np.abs(x) <= 1.0
        bound = 1.0 / ((1 << bits) - 1)
        assert np.abs(q[inside] - x[inside]).max() <= bound + 1e-12
    with pytest.raises(ValueError):
        qmath.quantize_signed(np.array([np.inf]), 2)


def test_quant_spec_bounds():
    assert qmath.QuantSpec(1).levels == 1
    assert qmath.QuantSpec(8).levels == 255
    for bad in (0, -1, 32):
        with pytest.raises(ValueError):
            qmath.QuantSpec(bad)


def test_map_dot_to_xnor_frozen_example():
    # a = [+1,-1,+1], b = [+1,+1,-1]: one agreeing pair, dot = -1.
    a = np.array([1.0, -1.0, 1.0])
    b = np.array([1.0, 1.0, -1.0])
    dot = float(a @ b)
    assert dot == -1.0
    assert qmath.map_dot_to_xnor(dot, 3) == 1.0
    assert qmath.map_xnor_to_dot(1.0, 3) == -1.0
    # the packed pipeline agrees with the arithmetic identity
    p = dot_xnor_popcount(pack_row(a, 0), pack_row(b, 1), 3)
    assert p == 1


def test_dot_maps_are_mutually_inverse():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n = int(rng.integers(1, 300))
        a = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        b = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        dot = float(a @ b)
        p = qmath.map_dot_to_xnor(dot, n)
        assert 0 <= p <= n
        assert qmath.map_xnor_to_dot(p, n) == dot
        # popcount of the xnor really is the agreement count
        assert p == int(np.sum(a == b))


def test_map_validation():
    with pytest.raises(ValueError):
        qmath.map_dot_to_xnor(5, 3)
    with pytest.raises(ValueError):
        qmath.map_dot_to_xnor(-4, 3)
    with pytest.raises(ValueError):
        qmath.map_xnor_to_dot(4, 3)
    with pytest.raises(ValueError):
        qmath.map_xnor_to_dot(-1, 3)
    with pytest.raises(ValueError):
        qmath.map_dot_to_xnor(0, -1)


def test_ste_backward_window():
    x = np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5])
    g = np.ones_like(x)
    out = qmath.ste_backward(g, x)
    # pass-through exactly on |x| <= 1, boundary inclusive
    assert np.array_equal(out, np.array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]))
    rng = np.random.default_rng(17)
    x = rng.uniform(-2, 2, size=(40, 7))
    g = rng.standard_normal((40, 7))
    out = qmath.ste_backward(g, x)
    assert np.array_equal(out, g * (np.abs(x) <= 1.0))
    with pytest.raises(ValueError):
        qmath.ste_backward(np.ones(3), np.ones(4))
