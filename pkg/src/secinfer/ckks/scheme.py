"""Leveled CKKS: keys, encryption and the homomorphic operations.

Ciphertexts are kept in the NTT domain.  Key switching (relinearisation and
rotation) decomposes the switched component into its RNS limbs, multiplies
each limb by a key over the active primes plus one special prime ``P``, and
divides the sum by ``P`` with rounding.  The division removes the factor of
roughly ``q_i`` the limb digits carry, which is what keeps the added noise
small.
"""
from __future__ import annotations

import secrets
from dataclasses import dataclass, field

import numpy as np

from ..errors import LevelExhausted, LevelMismatch, MissingRotationStep, ScaleMismatch
from . import encoding
from .encoding import Plaintext
from .params import CkksParams, validate_params
from .ring import RnsPoly, reduce_centered

SIGMA = 3.2
ERROR_BOUND = int(6 * SIGMA)  # 19
SCALE_TOLERANCE = 2.0 ** -20


# -- samplers ------------------------------------------------------------------

def make_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(secrets.randbits(128) if seed is None else seed)


def sample_ternary(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def sample_error(n: int, rng: np.random.Generator) -> np.ndarray:
    """Centered discrete Gaussian (sigma 3.2) by rejection on [-6 sigma, 6 sigma]."""
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        k = 2 * (n - filled) + 64
        cand = rng.integers(-ERROR_BOUND, ERROR_BOUND + 1, size=k, dtype=np.int64)
        keep = cand[rng.random(k) < np.exp(-(cand.astype(np.float64) ** 2) / (2 * SIGMA * SIGMA))]
        take = min(keep.size, n - filled)
        out[filled: filled + take] = keep[:take]
        filled += take
    return out


# -- key types -------------------------------------------------------------------

class SecretKey:
    """Ternary secret; deliberately impossible to serialise or pickle."""

    __slots__ = ("coeffs", "_cache")

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=np.int64)
        self._cache: dict = {}

    def poly(self, moduli: tuple[int, ...]) -> RnsPoly:
        moduli = tuple(moduli)
        if moduli not in self._cache:
            self._cache[moduli] = RnsPoly.from_signed(self.coeffs, moduli)
        return self._cache[moduli]

    def __reduce__(self):
        raise TypeError("secret keys never leave the client")

    def __repr__(self):
        return f"SecretKey(n={self.coeffs.size})"


@dataclass(frozen=True, eq=False)
class PublicKey:
    b: RnsPoly  # -a*s + e
    a: RnsPoly


@dataclass(frozen=True, eq=False)
class SwitchingKey:
    """Rows ``(b_i, a_i)`` over chain primes + special prime, one per digit ``i``."""
    b: np.ndarray  # (digits, limbs, N)
    a: np.ndarray
    moduli: tuple[int, ...]  # chain primes followed by P
    galois_elt: int = 0  # 0 for the relinearisation key


@dataclass(eq=False)
class KeyMaterial:
    params: CkksParams
    secret_key: SecretKey | None
    public_key: PublicKey
    relin_key: SwitchingKey
    galois_keys: dict[int, SwitchingKey] = field(default_factory=dict)

    def public(self) -> "KeyMaterial":
        """Copy without the secret key (what the server receives)."""
        return KeyMaterial(self.params, None, self.public_key, self.relin_key, dict(self.galois_keys))

    def galois_key(self, step: int) -> SwitchingKey:
        step = normalize_step(step, self.params.slot_count)
        if step not in self.galois_keys:
            raise MissingRotationStep(f"no galois key for rotation step {step}")
        return self.galois_keys[step]


@dataclass(frozen=True, eq=False)
class Ciphertext:
    components: tuple[RnsPoly, ...]
    scale: float

    @property
    def level(self) -> int:
        return self.components[0].level

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.components[0].moduli

    @property
    def n(self) -> int:
        return self.components[0].n

    def __post_init__(self):
        if len(self.components) < 2:
            raise ValueError("a ciphertext has at least two components")
        m = self.components[0].moduli
        if any(c.moduli != m or not c.is_ntt for c in self.components):
            raise ValueError("ciphertext components must share level and domain")


# -- key generation ------------------------------------------------------------------

def normalize_step(step: int, slots: int) -> int:
    return step % slots


def galois_element(step: int, n: int) -> int:
    return pow(5, normalize_step(step, n // 2), 2 * n)


def _switching_key(params: CkksParams, sk: SecretKey, target: RnsPoly, rng, galois_elt: int = 0) -> SwitchingKey:
    """Key that maps ``d * target`` to a ciphertext under ``sk`` (``target`` over chain + P)."""
    n = params.degree_n
    chain = params.primes
    P = params.special_prime
    moduli = chain + (P,)
    s = sk.poly(moduli)
    L = len(chain)
    B = np.empty((L, L + 1, n), dtype=np.uint64)
    A = np.empty((L, L + 1, n), dtype=np.uint64)
    for i in range(L):
        a = RnsPoly.uniform(n, moduli, rng)
        e = RnsPoly.from_signed(sample_error(n, rng), moduli)
        b = e - a * s
        # P * target only on limb i (the CRT gadget is 1 mod q_i, 0 mod q_j, 0 mod P)
        gadget = np.zeros(L + 1, dtype=object)
        gadget[i] = P % chain[i]
        limb = target.select([i]).mul_scalar([int(gadget[i])])
        bl = b.limbs.copy()
        bl[i] = (b.select([i]) + limb).limbs[0]
        B[i], A[i] = bl, a.limbs
    return SwitchingKey(B, A, moduli, galois_elt)


def keygen(params: CkksParams, seed=None, rotations=(1, 2)) -> KeyMaterial:
    """Generate all key material; deterministic for a fixed ``seed``."""
    params = params if params.is_validated else validate_params(params)
    if params.special_prime is None:
        raise ValueError("key switching needs a special prime (set special_bits)")
    rng = make_rng(seed)
    n = params.degree_n
    sk = SecretKey(sample_ternary(n, rng))
    chain = params.primes
    s = sk.poly(chain)
    a = RnsPoly.uniform(n, chain, rng)
    e = RnsPoly.from_signed(sample_error(n, rng), chain)
    pk = PublicKey(e - a * s, a)
    ext = params.primes + (params.special_prime,)
    s_ext = sk.poly(ext)
    rlk = _switching_key(params, sk, s_ext * s_ext, rng)
    gks = {}
    for step in sorted({normalize_step(r, params.slot_count) for r in rotations}):
        if step == 0:
            continue
        k = galois_element(step, n)
        gks[step] = _switching_key(params, sk, s_ext.automorphism(k), rng, k)
    return KeyMaterial(params, sk, pk, rlk, gks)


# -- encode / encrypt / decrypt ----------------------------------------------------

def level_moduli(params: CkksParams, level: int) -> tuple[int, ...]:
    if not 1 <= level <= params.max_level:
        raise LevelMismatch(f"level {level} outside 1..{params.max_level}")
    return params.primes[:level]


def encode(params: CkksParams, values, scale: float | None = None, level: int | None = None) -> Plaintext:
    scale = params.initial_scale if scale is None else scale
    level = params.max_level if level is None else level
    return encoding.encode(values, scale, level_moduli(params, level), params.degree_n)


def encode_constant(params: CkksParams, value: float, scale: float, level: int) -> Plaintext:
    return encoding.encode_constant(value, scale, level_moduli(params, level), params.degree_n)


decode = encoding.decode


def encrypt(pt: Plaintext, pk: PublicKey, rng=None) -> Ciphertext:
    """Public-key encryption: (v*b + e0 + m, v*a + e1) for ternary ``v``."""
    rng = make_rng(rng)
    moduli = pt.poly.moduli
    L = len(moduli)
    if pk.b.level < L:
        raise LevelMismatch("plaintext level exceeds the public key level")
    b, a = pk.b.select(list(range(L))), pk.a.select(list(range(L)))
    n = pt.poly.n
    v = RnsPoly.from_signed(sample_ternary(n, rng), moduli)
    e0 = RnsPoly.from_signed(sample_error(n, rng), moduli)
    e1 = RnsPoly.from_signed(sample_error(n, rng), moduli)
    return Ciphertext((v * b + e0 + pt.poly.to_ntt(), v * a + e1), pt.scale)


def seeded_uniform(seed: bytes, n: int, moduli: tuple[int, ...]) -> RnsPoly:
    return RnsPoly.uniform(n, moduli, np.random.default_rng(np.frombuffer(seed, dtype="<u4")))


def encrypt_symmetric(pt: Plaintext, sk: SecretKey, rng=None) -> tuple[Ciphertext, bytes]:
    """Secret-key encryption whose uniform half is expanded from a 32-byte seed.

    Returns the ciphertext and its seed; serialising with the seed halves the
    transmitted size.
    """
    rng = make_rng(rng)
    moduli = pt.poly.moduli
    n = pt.poly.n
    seed = rng.bytes(32)
    a = seeded_uniform(seed, n, moduli)
    e = RnsPoly.from_signed(sample_error(n, rng), moduli)
    return Ciphertext((pt.poly.to_ntt() + e - a * sk.poly(moduli), a), pt.scale), seed


def decrypt(ct: Ciphertext, sk: SecretKey) -> Plaintext:
    s = sk.poly(ct.moduli)
    acc = ct.components[-1]
    for c in reversed(ct.components[:-1]):
        acc = acc * s + c
    return Plaintext(acc, ct.scale)


def decrypt_values(ct: Ciphertext, sk: SecretKey) -> np.ndarray:
    return decode(decrypt(ct, sk))


# -- homomorphic operations ------------------------------------------------------------

def _same_level(a_level: int, b_level: int) -> None:
    if a_level != b_level:
        raise LevelMismatch(f"operand levels differ ({a_level} vs {b_level})")


def _same_scale(sa: float, sb: float) -> None:
    if abs(sa - sb) > SCALE_TOLERANCE * max(sa, sb):
        raise ScaleMismatch(f"operand scales differ (2^{np.log2(sa):.4f} vs 2^{np.log2(sb):.4f})")


def eval_add(a: Ciphertext, b) -> Ciphertext:
    if isinstance(b, Plaintext):
        _same_level(a.level, b.level)
        _same_scale(a.scale, b.scale)
        return Ciphertext((a.components[0] + b.poly.to_ntt(),) + a.components[1:], a.scale)
    _same_level(a.level, b.level)
    _same_scale(a.scale, b.scale)
    k = max(len(a.components), len(b.components))
    zero = RnsPoly.zeros(a.n, a.moduli)
    ca = a.components + (zero,) * (k - len(a.components))
    cb = b.components + (zero,) * (k - len(b.components))
    return Ciphertext(tuple(x + y for x, y in zip(ca, cb)), a.scale)


def eval_sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _same_level(a.level, b.level)
    _same_scale(a.scale, b.scale)
    return Ciphertext(tuple(x - y for x, y in zip(a.components, b.components)), a.scale)


def add_plain_values(ct: Ciphertext, params: CkksParams, values) -> Ciphertext:
    """Add a vector encoded on the fly at the ciphertext's own scale and level."""
    return eval_add(ct, encoding.encode(values, ct.scale, ct.moduli, ct.n))


def add_constant(ct: Ciphertext, value: float) -> Ciphertext:
    return eval_add(ct, encoding.encode_constant(value, ct.scale, ct.moduli, ct.n))


def eval_mul(a: Ciphertext, b, keys: KeyMaterial | None = None, relinearize_result: bool = True) -> Ciphertext:
    """Slotwise product; the caller rescales afterwards."""
    if a.level < 2:
        raise LevelExhausted("no prime left to rescale a product at level 1")
    if isinstance(b, Plaintext):
        _same_level(a.level, b.level)
        p = b.poly.to_ntt()
        return Ciphertext(tuple(c * p for c in a.components), a.scale * b.scale)
    _same_level(a.level, b.level)
    if len(a.components) != 2 or len(b.components) != 2:
        raise ValueError("relinearise before multiplying again")
    a0, a1 = a.components
    b0, b1 = b.components
    out = Ciphertext((a0 * b0, a0 * b1 + a1 * b0, a1 * b1), a.scale * b.scale)
    if relinearize_result:
        if keys is None:
            raise ValueError("ciphertext products need the relinearisation key")
        out = relinearize(out, keys.relin_key)
    return out


def key_switch(d: RnsPoly, key: SwitchingKey) -> tuple[RnsPoly, RnsPoly]:
    """(u0, u1) with u0 + u1*s ~ d * target over the moduli of ``d``."""
    moduli = d.moduli
    L = len(moduli)
    n = d.n
    P = key.moduli[-1]
    ext = moduli + (P,)
    rows = list(range(L)) + [len(key.moduli) - 1]
    coeff = d.to_coeff()
    u0 = RnsPoly.zeros(n, ext)
    u1 = RnsPoly.zeros(n, ext)
    for i in range(L):
        q = np.uint64(moduli[i])
        c = coeff.limbs[i]
        centered = np.where(c > q // np.uint64(2), c.astype(np.int64) - np.int64(moduli[i]), c.astype(np.int64))
        digit = RnsPoly(reduce_centered(centered, ext), ext, False).to_ntt()
        u0 = u0 + digit * RnsPoly(np.ascontiguousarray(key.b[i][rows]), ext, True)
        u1 = u1 + digit * RnsPoly(np.ascontiguousarray(key.a[i][rows]), ext, True)
    return _mod_down(u0, P), _mod_down(u1, P)


def _mod_down(u: RnsPoly, P: int) -> RnsPoly:
    """Divide by the special prime with rounding: (u - [u]_P) / P over the remaining moduli."""
    moduli = u.moduli[:-1]
    last = RnsPoly(u.limbs[-1:].copy(), (P,), True).to_coeff().limbs[0]
    centered = np.where(last > np.uint64(P // 2), last.astype(np.int64) - np.int64(P), last.astype(np.int64))
    corr = RnsPoly(reduce_centered(centered, moduli), moduli, False).to_ntt()
    rest = RnsPoly(u.limbs[:-1].copy(), moduli, True)
    return (rest - corr).mul_scalar([pow(P, -1, q) for q in moduli])


def relinearize(ct: Ciphertext, rlk: SwitchingKey) -> Ciphertext:
    if len(ct.components) == 2:
        return ct
    c0, c1, c2 = ct.components
    u0, u1 = key_switch(c2, rlk)
    return Ciphertext((c0 + u0, c1 + u1), ct.scale)


def rescale(ct: Ciphertext) -> Ciphertext:
    """Drop the last prime, dividing the message and its scale by it (rounded)."""
    if ct.level < 2:
        raise LevelExhausted("cannot rescale at level 1")
    q_last = ct.moduli[-1]
    moduli = ct.moduli[:-1]
    inv = [pow(q_last, -1, q) for q in moduli]
    out = []
    for c in ct.components:
        last = RnsPoly(c.limbs[-1:].copy(), (q_last,), True).to_coeff().limbs[0]
        centered = np.where(last > np.uint64(q_last // 2), last.astype(np.int64) - np.int64(q_last),
                            last.astype(np.int64))
        corr = RnsPoly(reduce_centered(centered, moduli), moduli, False).to_ntt()
        out.append((c.drop_last() - corr).mul_scalar(inv))
    return Ciphertext(tuple(out), ct.scale / q_last)


def mod_switch_to(ct: Ciphertext, level: int) -> Ciphertext:
    """Drop trailing primes without touching the scale (plain modulus reduction)."""
    if level > ct.level or level < 1:
        raise LevelMismatch(f"cannot switch level {ct.level} to {level}")
    k = ct.level - level
    return ct if k == 0 else Ciphertext(tuple(c.drop_last(k) for c in ct.components), ct.scale)


def mod_switch_plain(pt: Plaintext, level: int) -> Plaintext:
    return Plaintext(pt.poly.drop_last(pt.level - level), pt.scale)


def rotate(ct: Ciphertext, step: int, keys: KeyMaterial) -> Ciphertext:
    """Cyclic left shift of the slot vector by ``step``."""
    step = normalize_step(step, ct.n // 2)
    if step == 0:
        return ct
    key = keys.galois_key(step)
    if len(ct.components) != 2:
        raise ValueError("relinearise before rotating")
    c0, c1 = (c.automorphism(key.galois_elt) for c in ct.components)
    u0, u1 = key_switch(c1, key)
    return Ciphertext((c0 + u0, u1), ct.scale)
