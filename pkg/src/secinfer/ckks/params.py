"""CKKS parameter sets, the security budget table and NTT-friendly prime generation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import gmpy2

from ..errors import BudgetExceeded, DegreeUnusable, NonNttPrime, ParamError

# maximum total coefficient-modulus bits per ring degree (128-bit classical security)
SECURITY_BUDGET = {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881}
MIN_DEGREE = 1024
MAX_PRIME_BITS = 61  # Montgomery arithmetic needs q < 2^63 and room for lazy sums


@dataclass(frozen=True)
class CkksParams:
    """Ring degree, modulus chain (as requested bit lengths) and scale.

    ``primes`` and ``special_prime`` are filled in by :func:`validate_params`.
    The special prime only serves key switching; it never appears in a
    ciphertext and is not part of the chain budget.
    """
    degree_n: int
    modulus_bits: tuple[int, ...]
    initial_scale: float = 2.0 ** 30
    special_bits: int | None = None
    primes: tuple[int, ...] = ()
    special_prime: int | None = None
    security_budget_table: dict = field(default_factory=lambda: dict(SECURITY_BUDGET), compare=False, repr=False)

    @property
    def slot_count(self) -> int:
        return self.degree_n // 2

    @property
    def max_level(self) -> int:
        return len(self.modulus_bits)

    @property
    def total_bits(self) -> int:
        return sum(self.modulus_bits)

    @property
    def is_validated(self) -> bool:
        return len(self.primes) == len(self.modulus_bits) and (self.special_bits is None or self.special_prime)


@lru_cache(maxsize=None)
def ntt_primes(bits: int, degree_n: int, count: int, exclude: tuple[int, ...] = ()) -> tuple[int, ...]:
    """The ``count`` smallest primes ``q = 1 (mod 2N)`` with ``q > 2^bits``, skipping ``exclude``.

    Searching upward keeps every prime of a nominal ``b``-bit slot just above
    ``2^b``, so a scale of ``2^b`` is strictly below it.
    """
    if bits < 2 or bits > MAX_PRIME_BITS:
        raise NonNttPrime(f"prime bit length {bits} outside [2, {MAX_PRIME_BITS}]")
    m = 2 * degree_n
    q = (2 ** bits // m + 1) * m + 1
    found = []
    limit = 2 ** bits + m * 1_000_000
    while len(found) < count:
        if q > limit or q >= 2 ** (MAX_PRIME_BITS + 1):
            raise NonNttPrime(f"no {bits}-bit NTT prime for N={degree_n}")
        if q not in exclude and gmpy2.is_prime(q, 30):
            found.append(q)
        q += m
    return tuple(found)


def validate_params(params: CkksParams) -> CkksParams:
    """Check the invariants and generate concrete primes; returns a new params object."""
    n = params.degree_n
    if n < MIN_DEGREE or n & (n - 1):
        raise ParamError(f"degree must be a power of two >= {MIN_DEGREE}, got {n}")
    if n not in params.security_budget_table:
        raise ParamError(f"no security budget known for degree {n}")
    budget = params.security_budget_table[n]
    if n == MIN_DEGREE:
        raise DegreeUnusable(f"degree {n} allows only {budget} modulus bits, too few for CKKS")
    if not params.modulus_bits:
        raise ParamError("modulus chain is empty")
    if params.total_bits > budget:
        raise BudgetExceeded(f"chain of {params.total_bits} bits exceeds the {budget}-bit limit for N={n}")
    scale = params.initial_scale
    if scale <= 1 or not math.log2(scale).is_integer():
        raise ParamError(f"initial scale must be a power of two, got {scale}")
    primes: list[int] = []
    for b in sorted(set(params.modulus_bits)):
        need = params.modulus_bits.count(b)
        got = ntt_primes(b, n, need, tuple(primes))
        primes.extend(got)
    # assign in chain order: equal bit lengths take increasing primes
    pool = {b: sorted(p for p in primes if 2 ** b < p < 2 ** (b + 1)) for b in set(params.modulus_bits)}
    chain = []
    for b in params.modulus_bits:
        chain.append(pool[b].pop(0))
    special = None
    if params.special_bits is not None:
        special = ntt_primes(params.special_bits, n, 1, tuple(chain))[0]
    for q in chain[1:]:
        if not scale < q:
            raise ParamError(f"initial scale 2^{math.log2(scale):.0f} must be below every rescaling prime")
    for q in chain + ([special] if special else []):
        if (q - 1) % (2 * n):
            raise NonNttPrime(f"{q} is not 1 mod {2 * n}")
    return replace(params, primes=tuple(chain), special_prime=special)


PRESETS = {
    "paper": CkksParams(16384, (60, 40, 40, 40, 30, 30), 2.0 ** 30, special_bits=60),
    "test": CkksParams(4096, (40, 30, 30), 2.0 ** 30, special_bits=40),
}


@lru_cache(maxsize=None)
def preset(name: str) -> CkksParams:
    try:
        return validate_params(PRESETS[name])
    except KeyError:
        raise ParamError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
