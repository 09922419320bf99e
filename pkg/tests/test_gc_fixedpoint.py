import pytest
from hypothesis import given
from hypothesis import strategies as st

from secinfer.errors import FixedPointOverflow, UnsupportedWidth
from secinfer.gc.fixedpoint import (FixedPointSpec, fixed_decode, fixed_encode, fx_divscale, fx_mul,
                                    fx_mul_scaled, fx_relu, fx_sigmoid, round_half_away, trunc_div, wrap)

SPEC = FixedPointSpec()


def test_rounding_ties_away_from_zero():
    assert [round_half_away(v) for v in (0.5, 1.5, 2.5, -0.5, -2.5, 2.4999)] == [1, 2, 3, -1, -3, 2]


def test_encode_examples():
    assert fixed_encode(0.2505) == 251
    assert fixed_encode(-0.0005) == -1
    assert fixed_decode(-1234) == -1.234


def test_encode_overflow():
    with pytest.raises(FixedPointOverflow):
        fixed_encode(1e17, FixedPointSpec(64))
    with pytest.raises(FixedPointOverflow):
        fixed_encode(float("inf"))
    with pytest.raises(UnsupportedWidth):
        FixedPointSpec(width=16)


@given(st.integers(-10 ** 9, 10 ** 9), st.integers(1, 10 ** 6))
def test_trunc_div_rounds_toward_zero(a, b):
    q = trunc_div(a, b)
    assert abs(q) == abs(a) // b
    assert q * b + (a - q * b) == a and abs(a - q * b) < b


@given(st.integers(-(2 ** 70), 2 ** 70), st.sampled_from([32, 64]))
def test_wrap_is_twos_complement(v, w):
    r = wrap(v, w)
    assert -(2 ** (w - 1)) <= r < 2 ** (w - 1)
    assert (r - v) % (2 ** w) == 0


@given(st.integers(-(2 ** 31), 2 ** 31 - 1), st.integers(-(2 ** 31), 2 ** 31 - 1))
def test_product_then_divscale(a, b):
    assert fx_mul(a, b, SPEC) == a * b
    assert fx_mul_scaled(a, b, SPEC) == trunc_div(a * b, 1000)
    assert fx_divscale(-1999, SPEC) == -1


def test_sigmoid_by_hand():
    # 0.5 + 0.197*(-0.292) - 0.004*0.292^2 truncated per term: 500 - 57 - 0
    assert fx_sigmoid(-292, SPEC) == 443
    assert fx_sigmoid(0, SPEC) == 500
    # z = 2.0: 500 + 394 - 16
    assert fx_sigmoid(2000, SPEC) == 878
    assert fx_relu(-5, SPEC) == 0 and fx_relu(7, SPEC) == 7
