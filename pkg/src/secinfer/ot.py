"""1-out-of-2 oblivious transfer of 128-bit wire labels (semi-honest).

Two backends share one two-flight message pattern, receiver first:

``dh``
    Bellare-Micali style OT in the quadratic-residue subgroup of the 2048-bit
    MODP safe-prime group.  A public element ``C`` with unknown discrete log
    is derived by hashing.  The receiver sends ``PK0`` where
    ``PK_c = g^k`` and ``PK_{1-c} = C / g^k``; the sender answers with ``g^r``
    and each label masked by a hash of ``PK_b^r``.

``dealer``
    Precomputed random OTs from a trusted dealer shared by both parties,
    derandomised online (receiver sends ``c ^ c'``).  For tests only.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np

from .errors import MalformedMessage, ProtocolAbort
from .transport import Endpoint, MessageKind

LABEL_BYTES = 16
ELEMENT_BYTES = 256
EXPONENT_BITS = 256


@lru_cache(maxsize=None)
def modp_group() -> tuple[int, int, int]:
    """(p, q, g) of the 2048-bit MODP group, rebuilt from its defining formula."""
    import mpmath

    with mpmath.workprec(2200):
        pi_bits = int(mpmath.floor(mpmath.pi * mpmath.mpf(2) ** 1918))
    p = 2**2048 - 2**1984 - 1 + 2**64 * (pi_bits + 124476)
    q = (p - 1) // 2
    if not (gmpy2.is_prime(p, 25) and gmpy2.is_prime(q, 25)):
        raise RuntimeError("MODP group derivation failed")
    return p, q, 2


@lru_cache(maxsize=None)
def crs_element() -> int:
    p, _, _ = modp_group()
    digest = hashlib.shake_256(b"secinfer/ot/crs/v1").digest(ELEMENT_BYTES + 16)
    return int(gmpy2.powmod(int.from_bytes(digest, "big") % p, 2, p))


class _FixedBase:
    """Windowed table for g^e with 8-bit windows."""

    def __init__(self, g: int, p: int, bits: int = EXPONENT_BITS):
        self.p = gmpy2.mpz(p)
        self.tables = []
        base = gmpy2.mpz(g)
        for _ in range((bits + 7) // 8):
            row = [gmpy2.mpz(1)]
            for _ in range(255):
                row.append(row[-1] * base % self.p)
            self.tables.append(row)
            base = row[-1] * base % self.p

    def pow(self, e: int):
        acc = gmpy2.mpz(1)
        for row in self.tables:
            d = e & 0xFF
            if d:
                acc = acc * row[d] % self.p
            e >>= 8
        return acc


@lru_cache(maxsize=None)
def _generator_table() -> _FixedBase:
    p, _, g = modp_group()
    return _FixedBase(g, p)


def _kdf(element, index: int, bit: int) -> np.ndarray:
    h = hashlib.blake2b(digest_size=LABEL_BYTES, person=b"secinfer-ot")
    h.update(int(element).to_bytes(ELEMENT_BYTES, "big"))
    h.update(struct.pack("<QB", index, bit))
    return np.frombuffer(h.digest(), dtype="<u8")


def _random_exponent(rng) -> int:
    _, q, _ = modp_group()
    if rng is None:
        import secrets
        return 1 + secrets.randbelow(min(q - 1, 2**EXPONENT_BITS))
    return 1 + int.from_bytes(rng.bytes(EXPONENT_BITS // 8), "little") % (2**EXPONENT_BITS - 1)


def _check_element(x: int) -> None:
    p, _, _ = modp_group()
    if not 1 < x < p - 1 or gmpy2.legendre(x, p) != 1:
        raise ProtocolAbort("received group element is not in the prime-order subgroup")


class DhOt:
    name = "dh"

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng

    def request(self, choices):
        p, _, _ = modp_group()
        C = crs_element()
        fb = _generator_table()
        secrets_, body = [], bytearray(struct.pack("<I", len(choices)))
        for c in choices:
            k = _random_exponent(self.rng)
            x = fb.pow(k)
            pk0 = x if c == 0 else C * gmpy2.invert(x, p) % p
            secrets_.append(k)
            body += int(pk0).to_bytes(ELEMENT_BYTES, "big")
        return bytes(body), secrets_

    def respond(self, request: bytes, pairs: np.ndarray) -> bytes:
        p, _, _ = modp_group()
        n = _read_count(request, len(pairs))
        if len(request) != 4 + n * ELEMENT_BYTES:
            raise MalformedMessage("OT request length mismatch")
        C = gmpy2.mpz(crs_element())
        r = _random_exponent(self.rng)
        R = _generator_table().pow(r)
        Cr = gmpy2.powmod(C, r, p)
        out = bytearray(int(R).to_bytes(ELEMENT_BYTES, "big"))
        cts = np.empty((n, 2, 2), dtype="<u8")
        for i in range(n):
            off = 4 + i * ELEMENT_BYTES
            pk0 = int.from_bytes(request[off: off + ELEMENT_BYTES], "big")
            _check_element(pk0)
            k0 = gmpy2.powmod(pk0, r, p)
            k1 = Cr * gmpy2.invert(k0, p) % p
            cts[i, 0] = pairs[i, 0] ^ _kdf(k0, i, 0)
            cts[i, 1] = pairs[i, 1] ^ _kdf(k1, i, 1)
        return bytes(out) + cts.tobytes()

    def finish(self, response: bytes, choices, state) -> np.ndarray:
        p, _, _ = modp_group()
        n = len(choices)
        if len(response) != ELEMENT_BYTES + n * 2 * LABEL_BYTES:
            raise MalformedMessage("OT response length mismatch")
        R = int.from_bytes(response[:ELEMENT_BYTES], "big")
        _check_element(R)
        cts = np.frombuffer(response[ELEMENT_BYTES:], dtype="<u8").reshape(n, 2, 2)
        out = np.empty((n, 2), dtype=np.uint64)
        for i, (c, k) in enumerate(zip(choices, state)):
            key = gmpy2.powmod(R, k, p)
            out[i] = cts[i, c] ^ _kdf(key, i, c)
        return out


class Dealer:
    """Trusted source of random-OT correlations, shared by both parties in-process."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _batch(self, index: int, n: int):
        rng = np.random.default_rng([self.seed, index, n])
        r = np.frombuffer(rng.bytes(n * 2 * LABEL_BYTES), dtype="<u8").reshape(n, 2, 2)
        cprime = rng.integers(0, 2, size=n, dtype=np.uint8)
        return r, cprime

    def sender_share(self, index: int, n: int) -> np.ndarray:
        return self._batch(index, n)[0]

    def receiver_share(self, index: int, n: int):
        r, cprime = self._batch(index, n)
        return cprime, r[np.arange(n), cprime]


class DealerOt:
    name = "dealer"

    def __init__(self, dealer: Dealer):
        self.dealer = dealer
        self._sent = 0
        self._received = 0

    def request(self, choices):
        idx = self._received
        self._received += 1
        cprime, rc = self.dealer.receiver_share(idx, len(choices))
        e = np.asarray(choices, dtype=np.uint8) ^ cprime
        return struct.pack("<I", len(choices)) + np.packbits(e, bitorder="little").tobytes(), rc

    def respond(self, request: bytes, pairs: np.ndarray) -> bytes:
        n = _read_count(request, len(pairs))
        idx = self._sent
        self._sent += 1
        e = np.unpackbits(np.frombuffer(request[4:], dtype=np.uint8), bitorder="little")[:n]
        if e.size != n:
            raise MalformedMessage("OT request length mismatch")
        r = self.dealer.sender_share(idx, n)
        rows = np.arange(n)
        y = np.empty((n, 2, 2), dtype="<u8")
        y[:, 0] = pairs[:, 0] ^ r[rows, e]
        y[:, 1] = pairs[:, 1] ^ r[rows, 1 - e]
        return y.tobytes()

    def finish(self, response: bytes, choices, state) -> np.ndarray:
        n = len(choices)
        if len(response) != n * 2 * LABEL_BYTES:
            raise MalformedMessage("OT response length mismatch")
        y = np.frombuffer(response, dtype="<u8").reshape(n, 2, 2)
        return y[np.arange(n), np.asarray(choices, dtype=np.int64)] ^ state


def _read_count(request: bytes, expected: int) -> int:
    if len(request) < 4:
        raise MalformedMessage("truncated OT request")
    (n,) = struct.unpack_from("<I", request)
    if n != expected:
        raise ProtocolAbort(f"receiver asked for {n} transfers, sender has {expected}")
    return n


@dataclass
class OtBatch:
    """One exchange: sender side holds ``pairs`` (n, 2, 2), receiver side ``choices``."""
    pairs: np.ndarray | None = None
    choices: list[int] | None = None


def ot_send(channel: Endpoint, pairs: np.ndarray, backend, request: bytes | None = None) -> None:
    """Sender half of one exchange: consumes the request flight, sends the response.

    ``request`` may be passed in when the caller already read the OT_REQ frame.
    """
    pairs = np.asarray(pairs, dtype=np.uint64)
    if pairs.ndim != 3 or pairs.shape[1:] != (2, 2):
        raise ValueError("pairs must have shape (n, 2, 2)")
    if request is None:
        request = channel.recv_kind(MessageKind.OT_REQ)
    channel.send(MessageKind.OT_RESP, backend.respond(request, pairs))


def ot_receive(channel: Endpoint, choices, backend) -> np.ndarray:
    """Receiver half: sends the request flight, returns the chosen labels (n, 2)."""
    choices = [int(c) & 1 for c in choices]
    request, state = backend.request(choices)
    channel.send(MessageKind.OT_REQ, request)
    response = channel.recv_kind(MessageKind.OT_RESP)
    return backend.finish(response, choices, state)


def make_backend(name: str, rng=None, dealer: Dealer | None = None):
    if name == "dh":
        return DhOt(rng)
    if name == "dealer":
        return DealerOt(dealer or Dealer())
    raise ValueError(f"unknown OT backend {name!r}")
