"""Non-interactive encrypted inference with CKKS.

The client encrypts ``x`` and ships it with its evaluation keys in one
message; the server evaluates the network on the ciphertext and returns one
ciphertext.  Level plan on the ``paper`` preset chain (6 primes):

====  =========================================  =======
step  operation                                  level
====  =========================================  =======
1     W1 row products, rotate-and-sum, + b1      6 -> 5
2     square (relu stand-in)                     5 -> 4
3     W2 products, producing z and the affine    4 -> 3
      Horner factor ``-0.004 z + 0.197`` at once
4     product of the two, + 0.5                  3 -> 2
====  =========================================  =======

The result is mod-switched to one prime before it is sent back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ckks import scheme as ck
from .ckks.encoding import encode as _encode_raw
from .ckks.encoding import encode_constant as _encode_const_raw
from .ckks.params import CkksParams, validate_params
from .ckks.scheme import Ciphertext, KeyMaterial, SecretKey
from .ckks.serialize import read_all, serialize, serialize_ciphertext
from .errors import DimMismatch, LevelExhausted, MalformedMessage
from .nn_model import INPUT_DIM, SIGMOID_POLY, ModelParams
from .transport import Endpoint, MessageKind

ROTATIONS = (1, 2)


@dataclass(eq=False)
class FheSetupMessage:
    """Evaluation keys (optional after the first request) plus the encrypted input."""
    enc_x: Ciphertext
    params: CkksParams | None = None
    public_key: ck.PublicKey | None = None
    relin_key: ck.SwitchingKey | None = None
    galois_keys: dict[int, ck.SwitchingKey] = field(default_factory=dict)
    seed: bytes | None = None  # set when enc_x is a seeded symmetric ciphertext

    @property
    def has_keys(self) -> bool:
        return self.relin_key is not None

    def to_bytes(self) -> bytes:
        parts = []
        if self.has_keys:
            parts += [serialize(self.params), serialize(self.public_key), serialize(self.relin_key)]
            parts += [serialize(self.galois_keys[s]) for s in sorted(self.galois_keys)]
        parts.append(serialize_ciphertext(self.enc_x, self.seed))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "FheSetupMessage":
        objs = read_all(buf)
        if not objs or not isinstance(objs[-1], Ciphertext):
            raise MalformedMessage("setup message must end with the input ciphertext")
        msg = cls(objs[-1])
        for o in objs[:-1]:
            if isinstance(o, CkksParams):
                msg.params = o
            elif isinstance(o, ck.PublicKey):
                msg.public_key = o
            elif isinstance(o, ck.SwitchingKey) and o.galois_elt == 0:
                msg.relin_key = o
            elif isinstance(o, ck.SwitchingKey):
                n = o.b.shape[2]
                step = next(s for s in range(n // 2) if pow(5, s, 2 * n) == o.galois_elt)
                msg.galois_keys[step] = o
            else:
                raise MalformedMessage(f"unexpected {type(o).__name__} in setup message")
        return msg

    def keys(self) -> KeyMaterial:
        return KeyMaterial(self.params, None, self.public_key, self.relin_key, dict(self.galois_keys))


@dataclass(eq=False)
class FheResultMessage:
    enc_y: Ciphertext
    level_trace: list[int] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        return serialize(self.enc_y)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "FheResultMessage":
        objs = read_all(buf)
        if len(objs) != 1 or not isinstance(objs[0], Ciphertext):
            raise MalformedMessage("result message must hold exactly one ciphertext")
        return cls(objs[0])


# -- client -----------------------------------------------------------------------

def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != INPUT_DIM:
        raise DimMismatch(f"input must have {INPUT_DIM} entries, got {x.size}")
    return x


class FheClient:
    """Holds the key material; only this object ever touches the secret key."""

    def __init__(self, params: CkksParams, seed=None, symmetric: bool = True):
        self.params = params if params.is_validated else validate_params(params)
        self.rng = ck.make_rng(seed)
        self.keys = ck.keygen(self.params, self.rng, ROTATIONS)
        self.symmetric = symmetric

    @property
    def secret_key(self) -> SecretKey:
        return self.keys.secret_key

    def encrypt_input(self, x) -> tuple[Ciphertext, bytes | None]:
        pt = ck.encode(self.params, _check_x(x))
        if self.symmetric:
            return ck.encrypt_symmetric(pt, self.secret_key, self.rng)
        return ck.encrypt(pt, self.keys.public_key, self.rng), None

    def setup(self, x, with_keys: bool = True) -> FheSetupMessage:
        ct, seed = self.encrypt_input(x)
        if not with_keys:
            return FheSetupMessage(ct, seed=seed)
        k = self.keys
        return FheSetupMessage(ct, self.params, k.public_key, k.relin_key, dict(k.galois_keys), seed)

    def finish(self, result: FheResultMessage) -> float:
        return float(ck.decrypt_values(result.enc_y, self.secret_key)[0])


def client_setup(x, params: CkksParams, entropy=None, symmetric: bool = True):
    """Returns the setup message and the client (which retains the secret key)."""
    client = FheClient(params, entropy, symmetric)
    return client.setup(x), client


def client_finish(result: FheResultMessage, secret_key: SecretKey) -> float:
    return float(ck.decrypt_values(result.enc_y, secret_key)[0])


# -- server building blocks ----------------------------------------------------------

def _mul_const_to(ct: Ciphertext, value: float, target_scale: float) -> Ciphertext:
    """ct * value, rescaled, with the plaintext scale chosen so the result lands on ``target_scale``."""
    p_scale = target_scale * ct.moduli[-1] / ct.scale
    pt = _encode_const_raw(value, p_scale, ct.moduli, ct.n)
    return ck.rescale(ck.eval_mul(ct, pt))


def dot_product(enc_x: Ciphertext, w_row, length: int, keys: KeyMaterial) -> Ciphertext:
    """Slot 0 of the result holds sum_i w_i x_i; one level consumed."""
    w = np.asarray(w_row, dtype=np.float64).reshape(-1)
    if length > enc_x.n // 2 or w.size != length:
        raise DimMismatch(f"weight row of length {w.size} does not match {length}")
    if enc_x.level < 2:
        raise LevelExhausted("dot product needs a level to rescale")
    pt = _encode_raw(w, enc_x.moduli[-1], enc_x.moduli, enc_x.n)
    acc = ck.rescale(ck.eval_mul(enc_x, pt))
    prod = acc
    for step in range(1, length):
        acc = ck.eval_add(acc, ck.rotate(prod, step, keys))
    return acc


def relu_square(ct: Ciphertext, keys: KeyMaterial) -> Ciphertext:
    return ck.rescale(ck.eval_mul(ct, ct, keys))


def _sigmoid_tail(z: Ciphertext, z_aff: Ciphertext, keys: KeyMaterial) -> Ciphertext:
    c0 = SIGMOID_POLY[0]
    return ck.add_constant(ck.rescale(ck.eval_mul(z_aff, z, keys)), c0)


def _horner_target(ct_level_moduli: tuple[int, ...], params: CkksParams) -> float:
    # both factors of the final product sit at sqrt(scale * q) so that
    # dividing by the prime q dropped after the product returns to the base scale
    return math.sqrt(params.initial_scale * ct_level_moduli[-2])


def sigmoid_poly_ct(ct: Ciphertext, keys: KeyMaterial) -> Ciphertext:
    """0.5 + 0.197 z - 0.004 z^2 as (0.197 - 0.004 z) * z + 0.5; two levels."""
    if ct.level < 3:
        raise LevelExhausted(f"degree-2 sigmoid needs two levels below {ct.level}")
    _, c1, c2 = SIGMOID_POLY
    t = _horner_target(ct.moduli, keys.params)
    z = _mul_const_to(ct, 1.0, t)
    z_aff = ck.add_constant(_mul_const_to(ct, c2, t), c1)
    return _sigmoid_tail(z, z_aff, keys)


def server_infer(setup: FheSetupMessage, model: ModelParams, keys: KeyMaterial | None = None) -> FheResultMessage:
    """Evaluate the network homomorphically; ``keys`` overrides the ones in ``setup``."""
    keys = keys or setup.keys()
    params = keys.params
    ct = setup.enc_x
    trace = [ct.level]
    _, c1, c2 = SIGMOID_POLY

    hidden = []
    for i in range(model.h):
        z = dot_product(ct, model.W1[i], model.d, keys)
        hidden.append(ck.add_constant(z, float(model.b1[i])))
    trace.append(hidden[0].level)
    hidden = [relu_square(z, keys) for z in hidden]
    trace.append(hidden[0].level)

    if hidden[0].level < 3:
        raise LevelExhausted(f"chain too short: {hidden[0].level} levels left for the output layer")
    t = _horner_target(hidden[0].moduli, params)
    p_scale = t * hidden[0].moduli[-1] / hidden[0].scale
    z = z_aff = None
    for i, r in enumerate(hidden):
        w = float(model.W2[0, i])
        pz = ck.eval_mul(r, _encode_const_raw(w, p_scale, r.moduli, r.n))
        pa = ck.eval_mul(r, _encode_const_raw(c2 * w, p_scale, r.moduli, r.n))
        z = pz if z is None else ck.eval_add(z, pz)
        z_aff = pa if z_aff is None else ck.eval_add(z_aff, pa)
    z = ck.add_constant(ck.rescale(z), model.b2)
    z_aff = ck.add_constant(ck.rescale(z_aff), c1 + c2 * model.b2)
    trace.append(z.level)
    y = _sigmoid_tail(z, z_aff, keys)
    trace.append(y.level)
    # only slot 0 matters to the client; one prime is enough to carry it back
    return FheResultMessage(ck.mod_switch_to(y, 1), trace)


# -- protocol over a channel -------------------------------------------------------------

def run_client(channel: Endpoint, inputs, params: CkksParams, reuse_keys: bool = True, seed=None,
               symmetric: bool = True) -> list[float]:
    """Client party: one SETUP/RESULT exchange per input."""
    outputs = []
    client = None
    for k, x in enumerate(inputs):
        if client is None or not reuse_keys:
            client = FheClient(params, None if seed is None else [seed, k], symmetric)
            msg = client.setup(x, with_keys=True)
        else:
            msg = client.setup(x, with_keys=False)
        channel.send(MessageKind.SETUP, msg.to_bytes())
        result = FheResultMessage.from_bytes(channel.recv_kind(MessageKind.RESULT))
        outputs.append(client.finish(result))
    return outputs


def run_server(channel: Endpoint, model: ModelParams, count: int) -> list[list[int]]:
    """Server party: answers ``count`` requests, reusing the most recent keys."""
    keys = None
    traces = []
    for _ in range(count):
        msg = FheSetupMessage.from_bytes(channel.recv_kind(MessageKind.SETUP))
        if msg.has_keys:
            keys = msg.keys()
        elif keys is None:
            raise MalformedMessage("first request must carry evaluation keys")
        result = server_infer(msg, model, keys)
        traces.append(result.level_trace)
        channel.send(MessageKind.RESULT, result.to_bytes())
    return traces
