"""Binary framing of CKKS objects.

Every object is one frame ``[u32 magic][u16 version][u16 kind][u64 len][payload]``
(little-endian), the same layout the transport uses.  Payloads start with a
small header (ring degree, moduli, scale) followed by residues as u64.
Secret keys have no encoding at all.
"""
from __future__ import annotations

import enum
import struct

import numpy as np

from ..errors import MalformedMessage
from .encoding import Plaintext
from .params import CkksParams, validate_params
from .ring import RnsPoly
from .scheme import Ciphertext, PublicKey, SecretKey, SwitchingKey, seeded_uniform

MAGIC = 0x534B4B43  # b"CKKS" little-endian
VERSION = 1
FRAME = struct.Struct("<IHHQ")


class ObjectKind(enum.IntEnum):
    PARAMS = 1
    PLAINTEXT = 2
    CIPHERTEXT = 3
    PUBLIC_KEY = 4
    RELIN_KEY = 5
    GALOIS_KEY = 6
    SEEDED_CIPHERTEXT = 7


def _frame(kind: ObjectKind, payload: bytes) -> bytes:
    return FRAME.pack(MAGIC, VERSION, int(kind), len(payload)) + payload


def _moduli_header(n: int, moduli, extra: bytes = b"") -> bytes:
    return struct.pack("<IH", n, len(moduli)) + extra + np.array(moduli, dtype="<u8").tobytes()


class _Reader:
    def __init__(self, buf: bytes, offset: int = 0, end: int | None = None):
        self.buf = memoryview(buf)
        self.pos = offset
        self.end = len(buf) if end is None else end

    def take(self, k: int) -> memoryview:
        if self.pos + k > self.end:
            raise MalformedMessage("truncated CKKS object")
        out = self.buf[self.pos: self.pos + k]
        self.pos += k
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def u64s(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<u8").astype(np.uint64)

    def moduli(self):
        n, k = self.unpack("<IH")
        return n, k

    def done(self) -> None:
        if self.pos != self.end:
            raise MalformedMessage("trailing bytes in CKKS object")


# -- writers -----------------------------------------------------------------

def serialize_params(p: CkksParams) -> bytes:
    p = p if p.is_validated else validate_params(p)
    special = p.special_prime or 0
    body = struct.pack("<IHdQ", p.degree_n, len(p.primes), p.initial_scale, special)
    body += struct.pack(f"<{len(p.primes)}B", *p.modulus_bits) + np.array(p.primes, dtype="<u8").tobytes()
    sb = p.special_bits or 0
    return _frame(ObjectKind.PARAMS, body + struct.pack("<B", sb))


def _poly_bytes(p: RnsPoly) -> bytes:
    return np.ascontiguousarray(p.to_ntt().limbs, dtype="<u8").tobytes()


def serialize_ciphertext(ct: Ciphertext, seed: bytes | None = None) -> bytes:
    """Plain form, or seeded form (first component + 32-byte seed) for fresh symmetric ciphertexts."""
    head = _moduli_header(ct.n, ct.moduli, struct.pack("<Hd", len(ct.components), ct.scale))
    if seed is not None:
        if len(ct.components) != 2 or len(seed) != 32:
            raise ValueError("seeded form needs a two-component ciphertext and a 32-byte seed")
        return _frame(ObjectKind.SEEDED_CIPHERTEXT, head + seed + _poly_bytes(ct.components[0]))
    return _frame(ObjectKind.CIPHERTEXT, head + b"".join(_poly_bytes(c) for c in ct.components))


def serialize_plaintext(pt: Plaintext) -> bytes:
    head = _moduli_header(pt.poly.n, pt.poly.moduli, struct.pack("<Hd", 1, pt.scale))
    return _frame(ObjectKind.PLAINTEXT, head + _poly_bytes(pt.poly))


def serialize_public_key(pk: PublicKey) -> bytes:
    head = _moduli_header(pk.b.n, pk.b.moduli)
    return _frame(ObjectKind.PUBLIC_KEY, head + _poly_bytes(pk.b) + _poly_bytes(pk.a))


def serialize_switching_key(key: SwitchingKey) -> bytes:
    digits, limbs, n = key.b.shape
    head = _moduli_header(n, key.moduli, struct.pack("<HQ", digits, key.galois_elt))
    kind = ObjectKind.GALOIS_KEY if key.galois_elt else ObjectKind.RELIN_KEY
    return _frame(kind, head + np.ascontiguousarray(key.b, "<u8").tobytes() + np.ascontiguousarray(key.a, "<u8").tobytes())


def serialize(obj) -> bytes:
    if isinstance(obj, SecretKey):
        raise TypeError("secret keys are not serialisable")
    if isinstance(obj, CkksParams):
        return serialize_params(obj)
    if isinstance(obj, Ciphertext):
        return serialize_ciphertext(obj)
    if isinstance(obj, Plaintext):
        return serialize_plaintext(obj)
    if isinstance(obj, PublicKey):
        return serialize_public_key(obj)
    if isinstance(obj, SwitchingKey):
        return serialize_switching_key(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# -- readers -------------------------------------------------------------------

def _read_params(r: _Reader) -> CkksParams:
    n, k, scale, special = r.unpack("<IHdQ")
    bits = r.unpack(f"<{k}B")
    primes = tuple(int(q) for q in r.u64s(k))
    (sb,) = r.unpack("<B")
    p = validate_params(CkksParams(n, tuple(bits), scale, sb or None))
    if p.primes != primes or (p.special_prime or 0) != special:
        raise MalformedMessage("parameter primes do not match their bit lengths")
    return p


def _read_polys(r: _Reader, count: int, n: int, moduli) -> list[RnsPoly]:
    out = []
    for _ in range(count):
        limbs = r.u64s(len(moduli) * n).reshape(len(moduli), n)
        if np.any(limbs >= np.array(moduli, dtype=np.uint64)[:, None]):
            raise MalformedMessage("residue out of range")
        out.append(RnsPoly(limbs, moduli, True))
    return out


def _read_head(r: _Reader, extra: str = ""):
    n, k = r.unpack("<IH")
    vals = r.unpack(extra) if extra else ()
    moduli = tuple(int(q) for q in r.u64s(k))
    return n, moduli, vals


def read_object(buf: bytes, offset: int = 0):
    """Parse one frame at ``offset``; returns ``(object, next_offset)``."""
    if len(buf) - offset < FRAME.size:
        raise MalformedMessage("truncated CKKS frame header")
    magic, version, kind, length = FRAME.unpack_from(buf, offset)
    if magic != MAGIC or version != VERSION:
        raise MalformedMessage("not a CKKS object frame")
    start = offset + FRAME.size
    end = start + length
    if end > len(buf):
        raise MalformedMessage("truncated CKKS object")
    r = _Reader(buf, start, end)
    try:
        kind = ObjectKind(kind)
    except ValueError:
        raise MalformedMessage(f"unknown CKKS object kind {kind}") from None
    if kind == ObjectKind.PARAMS:
        obj = _read_params(r)
    elif kind in (ObjectKind.CIPHERTEXT, ObjectKind.PLAINTEXT, ObjectKind.SEEDED_CIPHERTEXT):
        n, moduli, (count, scale) = _read_head(r, "<Hd")
        if kind == ObjectKind.SEEDED_CIPHERTEXT:
            seed = bytes(r.take(32))
            (c0,) = _read_polys(r, 1, n, moduli)
            obj = Ciphertext((c0, seeded_uniform(seed, n, moduli)), scale)
        else:
            polys = _read_polys(r, count, n, moduli)
            obj = Plaintext(polys[0], scale) if kind == ObjectKind.PLAINTEXT else Ciphertext(tuple(polys), scale)
    elif kind == ObjectKind.PUBLIC_KEY:
        n, moduli, _ = _read_head(r)
        b, a = _read_polys(r, 2, n, moduli)
        obj = PublicKey(b, a)
    else:
        n, moduli, (digits, elt) = _read_head(r, "<HQ")
        size = digits * len(moduli) * n
        b = r.u64s(size).reshape(digits, len(moduli), n)
        a = r.u64s(size).reshape(digits, len(moduli), n)
        obj = SwitchingKey(b, a, moduli, int(elt))
    r.done()
    return obj, end


def deserialize(buf: bytes):
    obj, end = read_object(buf)
    if end != len(buf):
        raise MalformedMessage("trailing bytes after CKKS object")
    return obj


def read_all(buf: bytes) -> list:
    out, pos = [], 0
    while pos < len(buf):
        obj, pos = read_object(buf, pos)
        out.append(obj)
    return out
