"""Free-XOR / half-gates garbling and evaluation.

Labels are 128-bit blocks stored as pairs of little-endian uint64; the permute
bit is bit 0 of the low word.  Work is organised in *phases* by AND depth:
every XOR/NOT gate whose inputs are ready is propagated in one numba pass,
then all AND gates of the next depth are hashed with a single batched
fixed-key AES call.  Several instances of the same circuit (independent steps
of a plan) are processed together.

Gate hash: ``H(L, t) = AES_K(L ^ t) ^ L ^ t`` with ``t`` the 128-bit tweak
(low word = tweak index).  AND gate number ``g`` of a session uses tweaks
``2g`` and ``2g + 1``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ..errors import LabelMismatch, MalformedMessage, MissingInputLabel
from .circuits import BooleanCircuit, GateKind

# public fixed key of the gate-level permutation
PRF_KEY = bytes.fromhex("5365632d496e6665722d47432d505246")
ROW_BYTES = 16
TABLE_BYTES_PER_AND = 2 * ROW_BYTES


def random_blocks(n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``n`` uniformly random 128-bit blocks as an (n, 2) uint64 array."""
    raw = os.urandom(16 * n) if rng is None else rng.bytes(16 * n)
    return np.frombuffer(raw, dtype="<u8").reshape(n, 2).copy()


class FixedKeyPrf:
    def __init__(self, key: bytes = PRF_KEY):
        self._cipher = Cipher(algorithms.AES(key), modes.ECB())

    def permute(self, blocks: np.ndarray) -> np.ndarray:
        """AES_K applied to each 128-bit row of a uint64 array (any leading shape)."""
        enc = self._cipher.encryptor()
        out = enc.update(np.ascontiguousarray(blocks).tobytes()) + enc.finalize()
        return np.frombuffer(out, dtype="<u8").reshape(blocks.shape)

    def hash(self, tweaked: np.ndarray) -> np.ndarray:
        """Davies-Meyer style hash of already tweaked inputs ``L ^ t``."""
        return self.permute(tweaked) ^ tweaked


@dataclass
class GarblerState:
    delta: np.ndarray
    gate_counter: int = 0
    prf: FixedKeyPrf = field(default_factory=FixedKeyPrf)

    @classmethod
    def fresh(cls, rng: np.random.Generator | None = None) -> "GarblerState":
        delta = random_blocks(1, rng)[0]
        delta[0] |= np.uint64(1)
        return cls(delta=delta)

    def new_labels(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        return random_blocks(n, rng)


@dataclass
class GarbledNetlist:
    """Garbled tables of one netlist instance plus what the evaluator needs to decode."""
    circuit_name: str
    tables: np.ndarray  # (and_count, 2, 2) uint64: rows T_G, T_E
    first_gate: int
    output_zero_labels: np.ndarray
    decode_bits: np.ndarray

    @property
    def and_count(self) -> int:
        return self.tables.shape[0]

    @property
    def table_bytes(self) -> bytes:
        return self.tables.astype("<u8", copy=False).tobytes()


# -- phase schedule ------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSchedule:
    kind: np.ndarray
    in0: np.ndarray
    in1: np.ndarray
    out: np.ndarray
    and_ordinal: np.ndarray  # per gate; -1 for non-AND
    free_gates: tuple[np.ndarray, ...]  # per phase, XOR/NOT gate indices in topological order
    and_gates: tuple[np.ndarray, ...]  # per phase, AND gate indices run after the free gates
    const0: np.ndarray
    const1: np.ndarray


_schedules: dict[int, tuple[BooleanCircuit, PhaseSchedule]] = {}


def phase_schedule(c: BooleanCircuit) -> PhaseSchedule:
    cached = _schedules.get(id(c))
    if cached is not None and cached[0] is c:
        return cached[1]
    n = len(c.gates)
    kind = np.empty(n, dtype=np.int64)
    in0 = np.full(n, -1, dtype=np.int64)
    in1 = np.full(n, -1, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    ordinal = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(c.wire_count, dtype=np.int64)
    gate_phase = np.zeros(n, dtype=np.int64)
    const0, const1 = [], []
    next_ord = 0
    for i, g in enumerate(c.gates):
        kind[i] = g.kind
        out[i] = g.output
        if g.inputs:
            in0[i] = g.inputs[0]
        if len(g.inputs) > 1:
            in1[i] = g.inputs[1]
        if g.kind == GateKind.AND:
            d = max(depth[g.inputs[0]], depth[g.inputs[1]])
            gate_phase[i] = d  # hashed at the end of phase d
            depth[g.output] = d + 1
            ordinal[i] = next_ord
            next_ord += 1
        elif g.kind in (GateKind.XOR, GateKind.NOT):
            d = max(depth[w] for w in g.inputs)
            gate_phase[i] = d
            depth[g.output] = d
        else:
            (const1 if g.kind == GateKind.CONST1 else const0).append(g.output)
            gate_phase[i] = -1
    n_phases = int(gate_phase.max(initial=-1)) + 1
    free, ands = [], []
    is_and = kind == GateKind.AND
    is_free = (kind == GateKind.XOR) | (kind == GateKind.NOT)
    for p in range(n_phases):
        at = gate_phase == p
        free.append(np.flatnonzero(at & is_free))
        ands.append(np.flatnonzero(at & is_and))
    sched = PhaseSchedule(kind, in0, in1, out, ordinal, tuple(free), tuple(ands),
                          np.array(const0, dtype=np.int64), np.array(const1, dtype=np.int64))
    _schedules[id(c)] = (c, sched)
    return sched


# -- numba kernels -------------------------------------------------------------

_XOR = int(GateKind.XOR)


@nb.njit(cache=True)
def _free_pass(Z, gates, kind, in0, in1, out, delta0, delta1, garbler):
    k = Z.shape[0]
    for gi in gates:
        a = in0[gi]
        o = out[gi]
        if kind[gi] == _XOR:
            b = in1[gi]
            for i in range(k):
                Z[i, o, 0] = Z[i, a, 0] ^ Z[i, b, 0]
                Z[i, o, 1] = Z[i, a, 1] ^ Z[i, b, 1]
        else:
            for i in range(k):
                if garbler:
                    Z[i, o, 0] = Z[i, a, 0] ^ delta0
                    Z[i, o, 1] = Z[i, a, 1] ^ delta1
                else:
                    Z[i, o, 0] = Z[i, a, 0]
                    Z[i, o, 1] = Z[i, a, 1]


@nb.njit(cache=True)
def _garble_prep(Z, gates, in0, in1, ordinal, bases, delta0, delta1):
    k = Z.shape[0]
    m = gates.shape[0]
    blocks = np.empty((k, m, 4, 2), dtype=np.uint64)
    for i in range(k):
        for j in range(m):
            gi = gates[j]
            t = np.uint64(2 * (bases[i] + ordinal[gi]))
            a = in0[gi]
            b = in1[gi]
            blocks[i, j, 0, 0] = Z[i, a, 0] ^ t
            blocks[i, j, 0, 1] = Z[i, a, 1]
            blocks[i, j, 1, 0] = Z[i, a, 0] ^ delta0 ^ t
            blocks[i, j, 1, 1] = Z[i, a, 1] ^ delta1
            blocks[i, j, 2, 0] = Z[i, b, 0] ^ (t + np.uint64(1))
            blocks[i, j, 2, 1] = Z[i, b, 1]
            blocks[i, j, 3, 0] = Z[i, b, 0] ^ delta0 ^ (t + np.uint64(1))
            blocks[i, j, 3, 1] = Z[i, b, 1] ^ delta1
    return blocks


@nb.njit(cache=True)
def _garble_finish(Z, H, gates, in0, in1, out, ordinal, tables, delta0, delta1):
    k = Z.shape[0]
    m = gates.shape[0]
    one = np.uint64(1)
    zero = np.uint64(0)
    for i in range(k):
        for j in range(m):
            gi = gates[j]
            a = in0[gi]
            pa = Z[i, a, 0] & one
            pb = Z[i, in1[gi], 0] & one
            ma = zero - pa  # all-ones mask when the bit is set
            mb = zero - pb
            tg0 = H[i, j, 0, 0] ^ H[i, j, 1, 0] ^ (mb & delta0)
            tg1 = H[i, j, 0, 1] ^ H[i, j, 1, 1] ^ (mb & delta1)
            wg0 = H[i, j, 0, 0] ^ (ma & tg0)
            wg1 = H[i, j, 0, 1] ^ (ma & tg1)
            te0 = H[i, j, 2, 0] ^ H[i, j, 3, 0] ^ Z[i, a, 0]
            te1 = H[i, j, 2, 1] ^ H[i, j, 3, 1] ^ Z[i, a, 1]
            we0 = H[i, j, 2, 0] ^ (mb & (te0 ^ Z[i, a, 0]))
            we1 = H[i, j, 2, 1] ^ (mb & (te1 ^ Z[i, a, 1]))
            o = out[gi]
            Z[i, o, 0] = wg0 ^ we0
            Z[i, o, 1] = wg1 ^ we1
            r = ordinal[gi]
            tables[i, r, 0, 0] = tg0
            tables[i, r, 0, 1] = tg1
            tables[i, r, 1, 0] = te0
            tables[i, r, 1, 1] = te1


@nb.njit(cache=True)
def _eval_prep(L, gates, in0, in1, ordinal, bases):
    k = L.shape[0]
    m = gates.shape[0]
    blocks = np.empty((k, m, 2, 2), dtype=np.uint64)
    for i in range(k):
        for j in range(m):
            gi = gates[j]
            t = np.uint64(2 * (bases[i] + ordinal[gi]))
            a = in0[gi]
            b = in1[gi]
            blocks[i, j, 0, 0] = L[i, a, 0] ^ t
            blocks[i, j, 0, 1] = L[i, a, 1]
            blocks[i, j, 1, 0] = L[i, b, 0] ^ (t + np.uint64(1))
            blocks[i, j, 1, 1] = L[i, b, 1]
    return blocks


@nb.njit(cache=True)
def _eval_finish(L, H, gates, in0, in1, out, ordinal, tables):
    k = L.shape[0]
    m = gates.shape[0]
    one = np.uint64(1)
    zero = np.uint64(0)
    for i in range(k):
        for j in range(m):
            gi = gates[j]
            a = in0[gi]
            b = in1[gi]
            r = ordinal[gi]
            ma = zero - (L[i, a, 0] & one)
            mb = zero - (L[i, b, 0] & one)
            wg0 = H[i, j, 0, 0] ^ (ma & tables[i, r, 0, 0])
            wg1 = H[i, j, 0, 1] ^ (ma & tables[i, r, 0, 1])
            we0 = H[i, j, 1, 0] ^ (mb & (tables[i, r, 1, 0] ^ L[i, a, 0]))
            we1 = H[i, j, 1, 1] ^ (mb & (tables[i, r, 1, 1] ^ L[i, a, 1]))
            o = out[gi]
            L[i, o, 0] = wg0 ^ we0
            L[i, o, 1] = wg1 ^ we1


# -- batched engine --------------------------------------------------------------

def _input_array(c: BooleanCircuit, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.uint64)
    if labels.ndim == 2:
        labels = labels[None]
    n_in = len(c.input_wires)
    if labels.shape[1:] != (n_in, 2):
        raise MissingInputLabel(f"{c.name} needs {n_in} input labels per instance, got shape {labels.shape}")
    Z = np.zeros((labels.shape[0], c.wire_count, 2), dtype=np.uint64)
    Z[:, np.array(c.input_wires, dtype=np.int64)] = labels
    return Z


def garble_batch(c: BooleanCircuit, state: GarblerState, input_zero_labels: np.ndarray):
    """Garble ``k`` independent instances of ``c``.

    ``input_zero_labels`` has shape (k, n_inputs, 2).  Returns
    ``(tables, output_zero_labels)`` with shapes (k, and_count, 2, 2) and
    (k, n_outputs, 2); instance ``i`` uses the AND tweaks following those of
    instance ``i - 1``.
    """
    s = phase_schedule(c)
    Z = _input_array(c, input_zero_labels)
    k = Z.shape[0]
    d0, d1 = np.uint64(state.delta[0]), np.uint64(state.delta[1])
    # constant wires: CONST0 has zero-label 0, CONST1 has zero-label delta; the
    # evaluator holds the all-zero block on both
    Z[:, s.const1, 0] = d0
    Z[:, s.const1, 1] = d1
    n_and = c.and_count
    bases = state.gate_counter + n_and * np.arange(k, dtype=np.int64)
    tables = np.zeros((k, n_and, 2, 2), dtype=np.uint64)
    for free, ands in zip(s.free_gates, s.and_gates):
        if free.size:
            _free_pass(Z, free, s.kind, s.in0, s.in1, s.out, d0, d1, True)
        if ands.size:
            blocks = _garble_prep(Z, ands, s.in0, s.in1, s.and_ordinal, bases, d0, d1)
            H = state.prf.hash(blocks)
            _garble_finish(Z, H, ands, s.in0, s.in1, s.out, s.and_ordinal, tables, d0, d1)
    state.gate_counter += n_and * k
    outs = Z[:, np.array(c.output_wires, dtype=np.int64)].copy()
    return tables, outs


def evaluate_batch(c: BooleanCircuit, tables: np.ndarray, input_labels: np.ndarray, first_gate: int,
                   prf: FixedKeyPrf | None = None, return_all: bool = False):
    """Evaluate ``k`` garbled instances; mirrors :func:`garble_batch`."""
    prf = prf or FixedKeyPrf()
    s = phase_schedule(c)
    L = _input_array(c, input_labels)
    k = L.shape[0]
    n_and = c.and_count
    tables = np.asarray(tables, dtype=np.uint64)
    if tables.shape != (k, n_and, 2, 2):
        raise MalformedMessage(f"{c.name}: expected tables of shape {(k, n_and, 2, 2)}, got {tables.shape}")
    bases = first_gate + n_and * np.arange(k, dtype=np.int64)
    zero = np.uint64(0)
    for free, ands in zip(s.free_gates, s.and_gates):
        if free.size:
            _free_pass(L, free, s.kind, s.in0, s.in1, s.out, zero, zero, False)
        if ands.size:
            blocks = _eval_prep(L, ands, s.in0, s.in1, s.and_ordinal, bases)
            H = prf.hash(blocks)
            _eval_finish(L, H, ands, s.in0, s.in1, s.out, s.and_ordinal, tables)
    outs = L[:, np.array(c.output_wires, dtype=np.int64)].copy()
    return (outs, L) if return_all else outs


def garble_netlist(c: BooleanCircuit, state: GarblerState, input_zero_labels: np.ndarray) -> GarbledNetlist:
    first = state.gate_counter
    tables, outs = garble_batch(c, state, np.asarray(input_zero_labels)[None])
    return GarbledNetlist(c.name, tables[0], first, outs[0], decode_bits(outs[0]))


def evaluate_netlist(c: BooleanCircuit, gt: GarbledNetlist, input_labels: np.ndarray,
                     prf: FixedKeyPrf | None = None) -> np.ndarray:
    return evaluate_batch(c, gt.tables[None], np.asarray(input_labels)[None], gt.first_gate, prf)[0]


# -- label helpers ------------------------------------------------------------------

def decode_bits(zero_labels: np.ndarray) -> np.ndarray:
    return (np.asarray(zero_labels)[..., 0] & np.uint64(1)).astype(np.uint8)


def decode_labels(labels: np.ndarray, dbits: np.ndarray) -> np.ndarray:
    return ((np.asarray(labels)[..., 0] & np.uint64(1)).astype(np.uint8) ^ dbits).astype(np.uint8)


def select_labels(zero_labels: np.ndarray, bits, delta: np.ndarray) -> np.ndarray:
    """Active labels for plaintext ``bits``: zero-label, or zero-label ^ delta."""
    bits = np.asarray(bits, dtype=np.uint64).reshape(-1, 1)
    mask = np.uint64(0) - bits
    return np.asarray(zero_labels, dtype=np.uint64) ^ (mask & delta[None, :])


def check_output_labels(labels: np.ndarray, zero_labels: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Garbler-side decoding of returned output labels; rejects anything else."""
    labels = np.asarray(labels, dtype=np.uint64)
    zero_labels = np.asarray(zero_labels, dtype=np.uint64)
    is0 = np.all(labels == zero_labels, axis=-1)
    is1 = np.all(labels == (zero_labels ^ delta), axis=-1)
    if not np.all(is0 | is1):
        bad = int(np.flatnonzero(~(is0 | is1))[0])
        raise LabelMismatch(f"output label {bad} matches neither wire label")
    return is1.astype(np.uint8)


def labels_to_bytes(labels: np.ndarray) -> bytes:
    return np.ascontiguousarray(labels, dtype="<u8").tobytes()


def labels_from_bytes(raw: bytes, n: int | None = None) -> np.ndarray:
    if len(raw) % 16:
        raise MalformedMessage("label payload is not a whole number of blocks")
    arr = np.frombuffer(raw, dtype="<u8").reshape(-1, 2).copy()
    if n is not None and arr.shape[0] != n:
        raise MalformedMessage(f"expected {n} labels, got {arr.shape[0]}")
    return arr
