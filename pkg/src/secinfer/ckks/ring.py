"""RNS polynomials in Z_Q[X]/(X^N + 1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ntt as _ntt


@dataclass(frozen=True, eq=False)
class RnsPoly:
    limbs: np.ndarray  # (level, N) uint64, row i reduced mod moduli[i]
    moduli: tuple[int, ...]
    is_ntt: bool = True

    def __post_init__(self):
        if self.limbs.ndim != 2 or self.limbs.shape[0] != len(self.moduli):
            raise ValueError(f"limb array {self.limbs.shape} does not match {len(self.moduli)} moduli")
        if self.limbs.dtype != np.uint64:
            raise TypeError("limbs must be uint64")

    @property
    def n(self) -> int:
        return self.limbs.shape[1]

    @property
    def level(self) -> int:
        return len(self.moduli)

    @property
    def basis(self) -> _ntt.Basis:
        return _ntt.basis(self.moduli, self.n)

    def __eq__(self, other):
        return (isinstance(other, RnsPoly) and self.moduli == other.moduli and self.is_ntt == other.is_ntt
                and np.array_equal(self.limbs, other.limbs))

    # -- domain ---------------------------------------------------------------
    def to_ntt(self) -> "RnsPoly":
        return self if self.is_ntt else RnsPoly(_ntt.ntt(self.limbs, self.basis), self.moduli, True)

    def to_coeff(self) -> "RnsPoly":
        return RnsPoly(_ntt.intt(self.limbs, self.basis), self.moduli, False) if self.is_ntt else self

    # -- arithmetic (operands must share moduli and domain) ---------------------
    def _check(self, other: "RnsPoly") -> None:
        if self.moduli != other.moduli or self.is_ntt != other.is_ntt:
            raise ValueError("operands live in different RNS bases or domains")

    def __add__(self, other: "RnsPoly") -> "RnsPoly":
        self._check(other)
        q = self.basis.col
        s = self.limbs + other.limbs
        return RnsPoly(np.where(s >= q, s - q, s), self.moduli, self.is_ntt)

    def __sub__(self, other: "RnsPoly") -> "RnsPoly":
        self._check(other)
        q = self.basis.col
        s = self.limbs + (q - other.limbs)
        return RnsPoly(np.where(s >= q, s - q, s), self.moduli, self.is_ntt)

    def __neg__(self) -> "RnsPoly":
        q = self.basis.col
        return RnsPoly(np.where(self.limbs == 0, self.limbs, q - self.limbs), self.moduli, self.is_ntt)

    def __mul__(self, other: "RnsPoly") -> "RnsPoly":
        self._check(other)
        if not self.is_ntt:
            raise ValueError("polynomial products are taken in the NTT domain")
        b = self.basis
        return RnsPoly(_ntt.mul_rows(self.limbs, other.limbs, b.qs, b.qnegs, b.r2s), self.moduli, True)

    def mul_scalar(self, values) -> "RnsPoly":
        """Multiply limb i by ``values[i]`` (or one integer for every limb)."""
        b = self.basis
        s = _ntt.mont_constants(values, self.moduli)
        return RnsPoly(_ntt.scalar_mul_rows(self.limbs, s, b.qs, b.qnegs), self.moduli, self.is_ntt)

    def drop_last(self, k: int = 1) -> "RnsPoly":
        return RnsPoly(self.limbs[: self.level - k].copy(), self.moduli[: self.level - k], self.is_ntt)

    def select(self, idx: list[int]) -> "RnsPoly":
        return RnsPoly(self.limbs[idx].copy(), tuple(self.moduli[i] for i in idx), self.is_ntt)

    def automorphism(self, k: int) -> "RnsPoly":
        c = self.to_coeff()
        out = _ntt.automorphism_rows(c.limbs, k, c.basis.qs)
        res = RnsPoly(out, self.moduli, False)
        return res.to_ntt() if self.is_ntt else res

    # -- constructors ----------------------------------------------------------
    @classmethod
    def zeros(cls, n: int, moduli: tuple[int, ...], is_ntt: bool = True) -> "RnsPoly":
        return cls(np.zeros((len(moduli), n), dtype=np.uint64), tuple(moduli), is_ntt)

    @classmethod
    def from_signed(cls, coeffs: np.ndarray, moduli: tuple[int, ...], to_ntt: bool = True) -> "RnsPoly":
        """Small signed integer coefficients (|c| < 2^62) reduced into every limb."""
        c = np.asarray(coeffs, dtype=np.int64)
        limbs = np.stack([np.mod(c, np.int64(q)).astype(np.uint64) for q in moduli])
        p = cls(limbs, tuple(moduli), False)
        return p.to_ntt() if to_ntt else p

    @classmethod
    def uniform(cls, n: int, moduli: tuple[int, ...], rng: np.random.Generator) -> "RnsPoly":
        """Uniform element; sampled directly in the NTT domain (the transform is a bijection)."""
        limbs = np.stack([rng.integers(0, q, size=n, dtype=np.uint64) for q in moduli])
        return cls(limbs, tuple(moduli), True)

    def centered_row(self, i: int) -> np.ndarray:
        """Coefficients of limb ``i`` lifted to (-q/2, q/2] as int64 (coefficient domain)."""
        c = self.to_coeff().limbs[i]
        q = np.uint64(self.moduli[i])
        signed = c.astype(np.int64)
        return np.where(c > q // np.uint64(2), signed - np.int64(self.moduli[i]), signed)

    def to_bigint(self) -> np.ndarray:
        """CRT-reconstructed centered coefficients as Python ints (object array)."""
        c = self.to_coeff()
        if c.level == 1:
            return c.centered_row(0).astype(object)
        Q = 1
        for q in c.moduli:
            Q *= q
        acc = np.zeros(c.n, dtype=object)
        for i, q in enumerate(c.moduli):
            Qi = Q // q
            w = Qi * pow(Qi, -1, q)
            acc = acc + c.limbs[i].astype(object) * w
        acc = acc % Q
        return np.where(acc > Q // 2, acc - Q, acc)


def reduce_centered(row: np.ndarray, moduli: tuple[int, ...]) -> np.ndarray:
    """Signed int64 coefficients reduced into each modulus -> (len(moduli), N) uint64."""
    return np.stack([np.mod(row, np.int64(q)).astype(np.uint64) for q in moduli])
