"""Word-size modular arithmetic and the negacyclic NTT, compiled with numba.

Residues are uint64 below primes ``q < 2^62``.  Products use Montgomery
reduction with ``R = 2^64``; the 128-bit product is assembled from 32-bit
halves because numba has no wide integer type.  Twiddle factors are stored in
Montgomery form so a single reduction yields the plain product.

Forward transform: Cooley-Tukey on powers of a primitive 2N-th root ``psi``
in bit-reversed order, natural-order input, bit-reversed output.  The inverse
is Gentleman-Sande with the inverse powers, followed by scaling with ``1/N``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba as nb
import numpy as np

_U32 = np.uint64(32)
_LO = np.uint64(0xFFFFFFFF)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)


@nb.njit(inline="always")
def mulhilo(a, b):
    a0 = a & _LO
    a1 = a >> _U32
    b0 = b & _LO
    b1 = b >> _U32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _U32) + (p01 & _LO) + (p10 & _LO)
    hi = p11 + (p01 >> _U32) + (p10 >> _U32) + (mid >> _U32)
    lo = (mid << _U32) | (p00 & _LO)
    return hi, lo


@nb.njit(inline="always")
def mont(a, b, q, qneg):
    """a * b / 2^64 mod q for a, b < q < 2^63."""
    hi, lo = mulhilo(a, b)
    m = lo * qneg
    mh, _ = mulhilo(m, q)
    t = hi + mh + (_ONE if lo != _ZERO else _ZERO)
    if t >= q:
        t -= q
    return t


@nb.njit(cache=True)
def _ntt_forward(a, psi, q, qneg):
    n = a.shape[0]
    t = n
    m = 1
    while m < n:
        t >>= 1
        for i in range(m):
            j1 = 2 * i * t
            s = psi[m + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = mont(a[j + t], s, q, qneg)
                x = u + v
                a[j] = x - q if x >= q else x
                a[j + t] = u - v if u >= v else u + q - v
        m <<= 1


@nb.njit(cache=True)
def _ntt_inverse(a, psi_inv, n_inv, q, qneg):
    n = a.shape[0]
    t = 1
    m = n
    while m > 1:
        j1 = 0
        h = m >> 1
        for i in range(h):
            s = psi_inv[h + i]
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                x = u + v
                a[j] = x - q if x >= q else x
                a[j + t] = mont(u - v if u >= v else u + q - v, s, q, qneg)
            j1 += 2 * t
        t <<= 1
        m = h
    for j in range(n):
        a[j] = mont(a[j], n_inv, q, qneg)


@nb.njit(cache=True)
def ntt_rows(a, psi, qs, qnegs):
    for r in range(a.shape[0]):
        _ntt_forward(a[r], psi[r], qs[r], qnegs[r])


@nb.njit(cache=True)
def intt_rows(a, psi_inv, n_inv, qs, qnegs):
    for r in range(a.shape[0]):
        _ntt_inverse(a[r], psi_inv[r], n_inv[r], qs[r], qnegs[r])


@nb.njit(cache=True)
def mul_rows(a, b, qs, qnegs, r2s):
    """Pointwise a * b mod q per row (two Montgomery steps undo the 2^-64)."""
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q, qn, r2 = qs[r], qnegs[r], r2s[r]
        for j in range(a.shape[1]):
            out[r, j] = mont(mont(a[r, j], b[r, j], q, qn), r2, q, qn)
    return out


@nb.njit(cache=True)
def muladd_rows(acc, a, b, qs, qnegs, r2s):
    """acc += a * b mod q, in place."""
    for r in range(a.shape[0]):
        q, qn, r2 = qs[r], qnegs[r], r2s[r]
        for j in range(a.shape[1]):
            x = acc[r, j] + mont(mont(a[r, j], b[r, j], q, qn), r2, q, qn)
            acc[r, j] = x - q if x >= q else x


@nb.njit(cache=True)
def scalar_mul_rows(a, s_mont, qs, qnegs):
    """a * s mod q per row, where ``s_mont`` holds s * 2^64 mod q."""
    out = np.empty_like(a)
    for r in range(a.shape[0]):
        q, qn, s = qs[r], qnegs[r], s_mont[r]
        for j in range(a.shape[1]):
            out[r, j] = mont(a[r, j], s, q, qn)
    return out


@nb.njit(cache=True)
def automorphism_rows(a, k, qs):
    """Coefficient-domain X -> X^k (k odd) applied to every row."""
    rows, n = a.shape
    out = np.empty_like(a)
    two_n = 2 * n
    for i in range(n):
        j = (i * k) % two_n
        for r in range(rows):
            v = a[r, i]
            if j < n:
                out[r, j] = v
            else:
                out[r, j - n] = qs[r] - v if v != _ZERO else _ZERO
    return out


def bit_reverse(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


def _root_of_unity(q: int, order: int) -> int:
    """Smallest-generator primitive ``order``-th root of unity modulo prime ``q``."""
    if (q - 1) % order:
        raise ValueError(f"{order} does not divide q - 1")
    for x in range(2, q):
        r = pow(x, (q - 1) // order, q)
        if pow(r, order // 2, q) == q - 1:
            return r
    raise ValueError("no root found")


@dataclass(frozen=True)
class NttTable:
    q: int
    n: int
    qneg: np.uint64
    r2: np.uint64  # 2^128 mod q
    psi_rev: np.ndarray  # Montgomery form
    psi_inv_rev: np.ndarray
    n_inv: np.uint64  # Montgomery form

    def to_mont(self, x: int) -> np.uint64:
        return np.uint64((x << 64) % self.q)


@lru_cache(maxsize=None)
def ntt_table(q: int, n: int) -> NttTable:
    if q >= 1 << 62 or q % 2 == 0:
        raise ValueError("modulus must be an odd prime below 2^62")
    bits = n.bit_length() - 1
    psi = _root_of_unity(q, 2 * n)
    psi_inv = pow(psi, -1, q)
    pw, pwi = [1] * n, [1] * n
    for i in range(1, n):
        pw[i] = pw[i - 1] * psi % q
        pwi[i] = pwi[i - 1] * psi_inv % q
    rev = [bit_reverse(i, bits) for i in range(n)]
    R = 1 << 64
    psi_rev = np.array([pw[rev[i]] * R % q for i in range(n)], dtype=np.uint64)
    psi_inv_rev = np.array([pwi[rev[i]] * R % q for i in range(n)], dtype=np.uint64)
    qneg = np.uint64((-pow(q, -1, R)) % R)
    return NttTable(q, n, qneg, np.uint64(R * R % q), psi_rev, psi_inv_rev,
                    np.uint64(pow(n, -1, q) * R % q))


@dataclass(frozen=True)
class Basis:
    """Stacked tables for an ordered tuple of moduli, ready for the row kernels."""
    moduli: tuple[int, ...]
    n: int
    qs: np.ndarray
    qnegs: np.ndarray
    r2s: np.ndarray
    psi: np.ndarray
    psi_inv: np.ndarray
    n_inv: np.ndarray

    @property
    def col(self) -> np.ndarray:
        """Moduli as a column for numpy broadcasting."""
        return self.qs[:, None]


@lru_cache(maxsize=None)
def basis(moduli: tuple[int, ...], n: int) -> Basis:
    tabs = [ntt_table(q, n) for q in moduli]
    return Basis(
        tuple(moduli), n,
        np.array(moduli, dtype=np.uint64),
        np.array([t.qneg for t in tabs], dtype=np.uint64),
        np.array([t.r2 for t in tabs], dtype=np.uint64),
        np.stack([t.psi_rev for t in tabs]) if tabs else np.zeros((0, n), np.uint64),
        np.stack([t.psi_inv_rev for t in tabs]) if tabs else np.zeros((0, n), np.uint64),
        np.array([t.n_inv for t in tabs], dtype=np.uint64),
    )


def ntt(a: np.ndarray, b: Basis) -> np.ndarray:
    out = np.array(a, dtype=np.uint64, copy=True, order="C")
    ntt_rows(out, b.psi, b.qs, b.qnegs)
    return out


def intt(a: np.ndarray, b: Basis) -> np.ndarray:
    out = np.array(a, dtype=np.uint64, copy=True, order="C")
    intt_rows(out, b.psi_inv, b.n_inv, b.qs, b.qnegs)
    return out


def mont_constants(values, moduli) -> np.ndarray:
    """Per-row Montgomery form of integer constants (``values`` may be one int)."""
    if isinstance(values, int):
        values = [values] * len(moduli)
    return np.array([(v % q << 64) % q for v, q in zip(values, moduli)], dtype=np.uint64)


def negacyclic_schoolbook(a, b, q: int) -> np.ndarray:
    """Reference product in Z_q[X]/(X^N + 1) using Python integers."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        ai = int(a[i])
        if not ai:
            continue
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += ai * int(b[j])
            else:
                out[k - n] -= ai * int(b[j])
    return np.array([x % q for x in out], dtype=np.uint64)
