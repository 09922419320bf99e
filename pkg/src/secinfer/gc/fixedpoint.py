"""Signed fixed-point encoding and the exact integer semantics of every netlist kind.

These functions operate on Python integers only.  They are the reference the
Boolean circuits are checked against and the arithmetic used by the
fixed-point model oracle, so they must never call into the circuit code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..errors import FixedPointOverflow, UnsupportedWidth

SUPPORTED_WIDTHS = (32, 64)


@dataclass(frozen=True)
class FixedPointSpec:
    width: int = 64
    scale: int = 1000

    def __post_init__(self):
        if self.width not in SUPPORTED_WIDTHS:
            raise UnsupportedWidth(f"width must be one of {SUPPORTED_WIDTHS}, got {self.width}")
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")

    @property
    def sigmoid_constants(self) -> tuple[int, int, int]:
        """Integer coefficients (c0, c1, c2) of 0.5 + 0.197 z - 0.004 z^2 at this scale."""
        if self.scale == 1000:
            return 500, 197, 4
        s = Fraction(self.scale)
        return (round_half_away(Fraction(1, 2) * s), round_half_away(Fraction(197, 1000) * s),
                round_half_away(Fraction(4, 1000) * s))


def round_half_away(x) -> int:
    """Round to nearest integer, ties away from zero (works for float and Fraction)."""
    if isinstance(x, float) and not math.isfinite(x):
        raise FixedPointOverflow(f"cannot encode non-finite value {x}")
    r = math.floor(abs(x) + Fraction(1, 2)) if isinstance(x, Fraction) else math.floor(abs(x) + 0.5)
    return -r if x < 0 else r


def wrap(v: int, width: int) -> int:
    """Reduce an integer to a signed two's-complement value of ``width`` bits."""
    v &= (1 << width) - 1
    return v - (1 << width) if v >> (width - 1) else v


def trunc_div(a: int, b: int) -> int:
    """Integer division rounding toward zero."""
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def fixed_encode(v: float, spec: FixedPointSpec = FixedPointSpec()) -> int:
    V = round_half_away(v * spec.scale)
    if abs(V) >= 1 << (spec.width - 1):
        raise FixedPointOverflow(f"{v} does not fit in {spec.width} bits at scale {spec.scale}")
    return V


def fixed_decode(V: int, spec: FixedPointSpec = FixedPointSpec()) -> float:
    return V / spec.scale


# -- netlist semantics --------------------------------------------------------

def fx_add(a: int, b: int, spec: FixedPointSpec) -> int:
    return wrap(a + b, spec.width)


def fx_sub(a: int, b: int, spec: FixedPointSpec) -> int:
    return wrap(a - b, spec.width)


def fx_mul(a: int, b: int, spec: FixedPointSpec) -> int:
    """Full double-width product; exact for any pair of ``width``-bit operands."""
    return wrap(a * b, 2 * spec.width)


def fx_divscale(v: int, spec: FixedPointSpec) -> int:
    """Double-width value divided by the scale (toward zero), wrapped to ``width`` bits."""
    return wrap(trunc_div(v, spec.scale), spec.width)


def fx_relu(z: int, spec: FixedPointSpec) -> int:
    return z if z > 0 else 0


def fx_sigmoid(z: int, spec: FixedPointSpec) -> int:
    c0, c1, c2 = spec.sigmoid_constants
    s = spec.scale
    return wrap(c0 + trunc_div(c1 * z, s) - trunc_div(c2 * z * z, s * s), spec.width)


def fx_mul_scaled(a: int, b: int, spec: FixedPointSpec) -> int:
    """MUL followed by DIVSCALE, the unit step of every fixed-point dot product."""
    return fx_divscale(fx_mul(a, b, spec), spec)
