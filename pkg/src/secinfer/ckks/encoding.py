"""Canonical-embedding encoder.

A real polynomial m(X) of degree < N is identified with its values at the
primitive 2N-th roots of unity.  Slot ``j`` holds ``m(zeta^(5^j mod 2N))``;
the remaining roots are complex conjugates.  Evaluating at every odd power
``zeta^(2t+1)`` is one length-N FFT after twisting the coefficients by
``zeta^i``, so encode and decode are O(N log N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ScaleOutOfRange, TooManyValues
from .ring import RnsPoly

MAX_COEFF = 2.0 ** 62


@dataclass(frozen=True, eq=False)
class Plaintext:
    poly: RnsPoly
    scale: float

    @property
    def level(self) -> int:
        return self.poly.level


@lru_cache(maxsize=None)
def _embedding(n: int):
    two_n = 2 * n
    slots = n // 2
    pows = np.empty(slots, dtype=np.int64)
    g = 1
    for j in range(slots):
        pows[j] = g
        g = g * 5 % two_n
    idx = (pows - 1) // 2  # slot j lives at odd power 2*idx + 1
    conj = (two_n - pows - 1) // 2
    twist = np.exp(1j * np.pi * np.arange(n) / n)
    return idx, conj, twist


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def embed(values, n: int) -> np.ndarray:
    """Real coefficient vector (unscaled) whose slots are ``values`` zero-padded."""
    v = np.asarray(values, dtype=np.complex128).reshape(-1)
    slots = n // 2
    if v.size > slots:
        raise TooManyValues(f"{v.size} values exceed {slots} slots")
    idx, conj, twist = _embedding(n)
    w = np.zeros(n, dtype=np.complex128)
    z = np.zeros(slots, dtype=np.complex128)
    z[: v.size] = v
    w[idx] = z
    w[conj] = np.conj(z)
    return (np.fft.fft(w) / n * np.conj(twist)).real


def unembed(coeffs: np.ndarray) -> np.ndarray:
    """Slot values of a real coefficient vector."""
    c = np.asarray(coeffs, dtype=np.float64)
    n = c.size
    idx, _, twist = _embedding(n)
    w = np.fft.ifft(c * twist) * n
    return w[idx]


def encode(values, scale: float, moduli: tuple[int, ...], n: int) -> Plaintext:
    """Scale, round half away from zero and reduce into the RNS basis."""
    if not (scale > 0 and math.isfinite(scale)):
        raise ScaleOutOfRange(f"scale must be positive and finite, got {scale}")
    coeffs = round_half_away(embed(values, n) * scale)
    if coeffs.size and np.max(np.abs(coeffs)) >= MAX_COEFF:
        raise ScaleOutOfRange(f"scaled coefficients reach 2^{math.log2(np.max(np.abs(coeffs))):.1f}")
    q_bits = sum(math.log2(q) for q in moduli)
    if math.log2(scale) >= q_bits - 1:
        raise ScaleOutOfRange(f"scale 2^{math.log2(scale):.1f} does not fit a {q_bits:.0f}-bit modulus")
    return Plaintext(RnsPoly.from_signed(coeffs.astype(np.int64), moduli), scale)


def encode_constant(value: float, scale: float, moduli: tuple[int, ...], n: int) -> Plaintext:
    """Same value in every slot: the constant polynomial ``round(value * scale)``."""
    c = round_half_away(np.array([value * scale]))[0]
    if abs(c) >= MAX_COEFF:
        raise ScaleOutOfRange(f"constant {value} at scale {scale} is too large")
    coeffs = np.zeros(n, dtype=np.int64)
    coeffs[0] = int(c)
    return Plaintext(RnsPoly.from_signed(coeffs, moduli), scale)


def decode(pt: Plaintext) -> np.ndarray:
    """Real parts of all ``N/2`` slots."""
    big = pt.poly.to_bigint()
    coeffs = np.array([float(x) for x in big], dtype=np.float64) / pt.scale
    return unembed(coeffs).real
