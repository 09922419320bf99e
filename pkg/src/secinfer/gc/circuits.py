"""Gate-level netlists for the fixed-point operations of the GC pipeline.

Words are little-endian lists of wire ids (bit 0 first) in two's complement.
The builder folds constants and hashes structurally, so circuits only contain
gates whose output actually depends on an input.  NOT is emitted as XOR with
a CONST1 wire, leaving XOR and AND as the only non-constant gate kinds.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import gcd

import numpy as np

from ..errors import UnsupportedWidth
from .fixedpoint import FixedPointSpec, SUPPORTED_WIDTHS


class GateKind(enum.IntEnum):
    XOR = 0
    AND = 1
    NOT = 2
    CONST0 = 3
    CONST1 = 4


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    inputs: tuple[int, ...]
    output: int


@dataclass(frozen=True)
class Schedule:
    """Gates grouped into dependency levels for batched garbling.

    Each level is a tuple ``(xor, not_, and_)`` of index arrays; ``xor`` and
    ``and_`` have rows (in0, in1, out[, and_ordinal]); ``not_`` has (in, out).
    """
    const0: np.ndarray
    const1: np.ndarray
    levels: tuple


@dataclass(frozen=True)
class BooleanCircuit:
    name: str
    wire_count: int
    gates: tuple[Gate, ...]
    inputs: tuple[tuple[int, ...], ...]
    outputs: tuple[tuple[int, ...], ...]
    input_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def input_wires(self) -> tuple[int, ...]:
        return tuple(w for word in self.inputs for w in word)

    @property
    def output_wires(self) -> tuple[int, ...]:
        return tuple(w for word in self.outputs for w in word)

    @property
    def input_map(self) -> dict[str, tuple[int, ...]]:
        names = self.input_names or tuple(f"in{i}" for i in range(len(self.inputs)))
        return dict(zip(names, self.inputs))

    @cached_property
    def and_count(self) -> int:
        return sum(1 for g in self.gates if g.kind == GateKind.AND)

    @cached_property
    def schedule(self) -> Schedule:
        return _levelize(self)

    def validate(self) -> None:
        driven = set(self.input_wires)
        for g in self.gates:
            arity = {GateKind.XOR: 2, GateKind.AND: 2, GateKind.NOT: 1}.get(g.kind, 0)
            if len(g.inputs) != arity:
                raise ValueError(f"gate {g} has wrong arity")
            for w in g.inputs:
                if w not in driven:
                    raise ValueError(f"gate {g} reads undriven wire {w}")
            if g.output in driven:
                raise ValueError(f"wire {g.output} driven twice")
            driven.add(g.output)
        for w in self.output_wires:
            if w not in driven:
                raise ValueError(f"output wire {w} is not driven")


def _levelize(c: BooleanCircuit) -> Schedule:
    level = np.zeros(c.wire_count, dtype=np.int64)
    glevel = []
    const0, const1 = [], []
    for g in c.gates:
        if g.kind == GateKind.CONST0:
            const0.append(g.output)
            glevel.append(-1)
        elif g.kind == GateKind.CONST1:
            const1.append(g.output)
            glevel.append(-1)
        else:
            lv = 1 + max(level[w] for w in g.inputs)
            level[g.output] = lv
            glevel.append(lv)
    depth = max([lv for lv in glevel], default=0)
    buckets = [([], [], []) for _ in range(depth + 1)]
    ordinal = 0
    for g, lv in zip(c.gates, glevel):
        if g.kind == GateKind.XOR:
            buckets[lv][0].append((g.inputs[0], g.inputs[1], g.output))
        elif g.kind == GateKind.NOT:
            buckets[lv][1].append((g.inputs[0], g.output))
        elif g.kind == GateKind.AND:
            buckets[lv][2].append((g.inputs[0], g.inputs[1], g.output, ordinal))
            ordinal += 1
    levels = []
    for xs, ns, ands in buckets[1:]:
        levels.append((
            np.array(xs, dtype=np.int64).reshape(-1, 3).T.copy(),
            np.array(ns, dtype=np.int64).reshape(-1, 2).T.copy(),
            np.array(ands, dtype=np.int64).reshape(-1, 4).T.copy(),
        ))
    return Schedule(np.array(const0, dtype=np.int64), np.array(const1, dtype=np.int64), tuple(levels))


class CircuitBuilder:
    """Incremental netlist construction with constant folding and gate hashing."""

    def __init__(self, name: str = "circuit"):
        self.name = name
        self._input_words: list[tuple[int, ...]] = []
        self._input_names: list[str] = []
        self._pending_gates: list[tuple[GateKind, tuple[int, ...]]] = []
        self._const: dict[int, int] = {}
        self._const_wire = {0: None, 1: None}
        self._negation: dict[int, int] = {}
        self._hash: dict[tuple, int] = {}
        self._next = 0

    # wires are numbered inputs first, then one new wire per emitted gate
    def input_word(self, width: int, name: str | None = None) -> list[int]:
        if self._pending_gates:
            raise RuntimeError("declare all inputs before adding gates")
        word = list(range(self._next, self._next + width))
        self._next += width
        self._input_words.append(tuple(word))
        self._input_names.append(name or f"in{len(self._input_words) - 1}")
        return word

    def _emit(self, kind: GateKind, ins: tuple[int, ...]) -> int:
        out = self._next
        self._next += 1
        self._pending_gates.append((kind, ins, out))
        return out

    def const(self, bit: int) -> int:
        bit = int(bit) & 1
        if self._const_wire[bit] is None:
            w = self._emit(GateKind.CONST1 if bit else GateKind.CONST0, ())
            self._const_wire[bit] = w
            self._const[w] = bit
        return self._const_wire[bit]

    def is_const(self, w: int) -> int | None:
        return self._const.get(w)

    def xor(self, a: int, b: int) -> int:
        ca, cb = self._const.get(a), self._const.get(b)
        if ca is not None and cb is not None:
            return self.const(ca ^ cb)
        if ca is not None:
            return self.not_(b) if ca else b
        if cb is not None:
            return self.not_(a) if cb else a
        if a == b:
            return self.const(0)
        if self._negation.get(a) == b:
            return self.const(1)
        key = ("x", min(a, b), max(a, b))
        if key not in self._hash:
            self._hash[key] = self._emit(GateKind.XOR, (a, b))
        return self._hash[key]

    def and_(self, a: int, b: int) -> int:
        ca, cb = self._const.get(a), self._const.get(b)
        if ca is not None and cb is not None:
            return self.const(ca & cb)
        if ca is not None:
            return b if ca else self.const(0)
        if cb is not None:
            return a if cb else self.const(0)
        if a == b:
            return a
        if self._negation.get(a) == b:
            return self.const(0)
        key = ("a", min(a, b), max(a, b))
        if key not in self._hash:
            self._hash[key] = self._emit(GateKind.AND, (a, b))
        return self._hash[key]

    def not_(self, a: int) -> int:
        ca = self._const.get(a)
        if ca is not None:
            return self.const(1 - ca)
        if a in self._negation:
            return self._negation[a]
        key = ("n", a)
        if key not in self._hash:
            out = self._emit(GateKind.XOR, (a, self.const(1)))
            self._hash[key] = out
            self._negation[out] = a
            self._negation[a] = out
        return self._hash[key]

    def or_(self, a: int, b: int) -> int:
        return self.xor(self.xor(a, b), self.and_(a, b))

    def mux(self, sel: int, if1: int, if0: int) -> int:
        return self.xor(if0, self.and_(sel, self.xor(if1, if0)))

    # -- word level -------------------------------------------------------

    def const_word(self, value: int, width: int) -> list[int]:
        return [self.const((value >> i) & 1) for i in range(width)]

    def sign_extend(self, a: list[int], width: int) -> list[int]:
        return list(a[:width]) + [a[-1]] * (width - len(a))

    def add(self, a: list[int], b: list[int], carry: int | None = None, carry_out: bool = False):
        """Ripple-carry sum of equal-width words; one AND per bit."""
        if len(a) != len(b):
            raise ValueError("operand widths differ")
        c = self.const(0) if carry is None else carry
        out = []
        n = len(a)
        for i in range(n):
            out.append(self.xor(self.xor(a[i], b[i]), c))
            if i < n - 1 or carry_out:
                # majority(a, b, c) = c ^ ((a ^ c) & (b ^ c))
                c = self.xor(c, self.and_(self.xor(a[i], c), self.xor(b[i], c)))
        return (out, c) if carry_out else out

    def sub(self, a: list[int], b: list[int], borrow_out: bool = False):
        nb = [self.not_(w) for w in b]
        if borrow_out:
            out, c = self.add(a, nb, self.const(1), carry_out=True)
            return out, self.not_(c)
        return self.add(a, nb, self.const(1))

    def negate_if(self, a: list[int], cond: int) -> list[int]:
        """Two's-complement negation of ``a`` when ``cond`` is 1."""
        flipped = [self.xor(w, cond) for w in a]
        zero = [self.const(0)] * len(a)
        return self.add(flipped, zero, cond)

    def mux_word(self, sel: int, if1: list[int], if0: list[int]) -> list[int]:
        return [self.mux(sel, x, y) for x, y in zip(if1, if0)]

    def mul_signed(self, a: list[int], b: list[int]) -> list[int]:
        """Exact signed product of two w-bit words as a 2w-bit word."""
        w = len(a)
        if len(b) != w:
            raise ValueError("operand widths differ")
        n = 2 * w
        acc = [self.const(0)] * n
        for i in range(w):
            pp = [self.and_(a[i], bj) for bj in b]
            row = pp + [pp[-1]] * (n - i - w)
            if i < w - 1:
                acc[i:] = self.add(acc[i:], row)
            else:
                # the sign bit of a carries weight -2^(w-1)
                acc[i:] = self.sub(acc[i:], row)
        return acc

    def mul_const(self, a: list[int], c: int, width: int) -> list[int]:
        """a * c modulo 2^width for a non-negative constant c (a sign-extended)."""
        a = self.sign_extend(a, width)
        acc = None
        for k in range(c.bit_length()):
            if (c >> k) & 1:
                shifted = [self.const(0)] * k + a[: width - k]
                acc = shifted if acc is None else self.add(acc, shifted)
        return acc if acc is not None else self.const_word(0, width)

    def udiv_const(self, a: list[int], d: int) -> tuple[list[int], list[int]]:
        """Unsigned long division of a word by a constant; returns (quotient, remainder)."""
        if d < 1:
            raise ValueError("divisor must be positive")
        k = d.bit_length()
        neg_d = self.const_word((1 << (k + 1)) - d, k + 1)
        r = self.const_word(0, k)
        q = []
        for bit in reversed(a):
            shifted = [bit] + r  # 2r + bit, k + 1 bits
            diff, geq = self.add(shifted, neg_d, carry_out=True)
            q.append(geq)
            r = self.mux_word(geq, diff[:k], shifted[:k])
        return q[::-1], r

    def sdiv_const(self, a: list[int], d: int, out_width: int) -> list[int]:
        """Signed division toward zero by a positive constant, wrapped to out_width."""
        sign = a[-1]
        mag = self.negate_if(a, sign)
        q, _ = self.udiv_const(mag, d)
        return self.negate_if(q[:out_width], sign)

    def relu(self, a: list[int]) -> list[int]:
        keep = self.not_(a[-1])
        return [self.and_(w, keep) for w in a[:-1]] + [self.const(0)]

    def build(self, outputs: list[list[int]]) -> BooleanCircuit:
        gates = tuple(Gate(k, ins, out) for k, ins, out in self._pending_gates)
        circuit = BooleanCircuit(
            name=self.name,
            wire_count=self._next,
            gates=gates,
            inputs=tuple(self._input_words),
            outputs=tuple(tuple(word) for word in outputs),
            input_names=tuple(self._input_names),
        )
        circuit.validate()
        return circuit


# -- netlist library ---------------------------------------------------------

class Kind(enum.Enum):
    ADD = "ADD"
    SUB = "SUB"
    MUL = "MUL"
    DIVSCALE = "DIVSCALE"
    RELU = "RELU"
    POLY2_SIGMOID = "POLY2_SIGMOID"
    MATVEC = "MATVEC"


def _sigmoid_netlist(bld: CircuitBuilder, z: list[int], spec: FixedPointSpec) -> list[int]:
    w = spec.width
    c0, c1, c2 = spec.sigmoid_constants
    s = spec.scale
    # c1*z/S: exact in 2w bits because c1 < S
    lin = bld.sdiv_const(bld.mul_const(z, c1, 2 * w), s, w)
    # c2*z^2/S^2 with the fraction reduced; z^2 >= 0 so the division is unsigned
    g = gcd(c2, s * s)
    num, den = c2 // g, (s * s) // g
    sq = bld.mul_signed(z, z)
    wide = 2 * w + max(num.bit_length(), 1)
    scaled = bld.mul_const(sq + [bld.const(0)] * (wide - 2 * w), num, wide) if num != 1 else sq
    quad, _ = bld.udiv_const(scaled, den)
    quad = quad[:w]
    out = bld.add(bld.const_word(c0, w), lin)
    return bld.sub(out, quad)


@lru_cache(maxsize=None)
def build_netlist(kind: Kind, spec: FixedPointSpec = FixedPointSpec(), rows: int = 1, cols: int = 1) -> BooleanCircuit:
    """Precompiled circuit for one operation; cached so repeated calls share it."""
    if spec.width not in SUPPORTED_WIDTHS:
        raise UnsupportedWidth(spec.width)
    w = spec.width
    bld = CircuitBuilder(f"{kind.value}{'' if kind != Kind.MATVEC else f'_{rows}x{cols}'}_w{w}_s{spec.scale}")
    if kind in (Kind.ADD, Kind.SUB):
        a, b = bld.input_word(w, "a"), bld.input_word(w, "b")
        out = bld.add(a, b) if kind == Kind.ADD else bld.sub(a, b)
    elif kind == Kind.MUL:
        a, b = bld.input_word(w, "a"), bld.input_word(w, "b")
        out = bld.mul_signed(a, b)
    elif kind == Kind.DIVSCALE:
        v = bld.input_word(2 * w, "v")
        out = bld.sdiv_const(v, spec.scale, w)
    elif kind == Kind.RELU:
        out = bld.relu(bld.input_word(w, "z"))
    elif kind == Kind.POLY2_SIGMOID:
        out = _sigmoid_netlist(bld, bld.input_word(w, "z"), spec)
    elif kind == Kind.MATVEC:
        W = [[bld.input_word(w, f"W[{i}][{j}]") for j in range(cols)] for i in range(rows)]
        x = [bld.input_word(w, f"x[{j}]") for j in range(cols)]
        outs = []
        for i in range(rows):
            acc = None
            for j in range(cols):
                term = bld.sdiv_const(bld.mul_signed(W[i][j], x[j]), spec.scale, w)
                acc = term if acc is None else bld.add(acc, term)
            outs.append(acc)
        return bld.build(outs)
    else:  # pragma: no cover
        raise ValueError(kind)
    return bld.build([out])


def circuit_stats(c: BooleanCircuit) -> dict:
    counts = {k: 0 for k in GateKind}
    for g in c.gates:
        counts[g.kind] += 1
    return {
        "name": c.name,
        "and_count": counts[GateKind.AND],
        "xor_count": counts[GateKind.XOR],
        "not_count": counts[GateKind.NOT],
        "const_count": counts[GateKind.CONST0] + counts[GateKind.CONST1],
        "total_gates": len(c.gates),
        "depth": len(c.schedule.levels),
        "input_widths": [len(word) for word in c.inputs],
        "output_widths": [len(word) for word in c.outputs],
        "table_bytes": 32 * counts[GateKind.AND],
    }


def export_netlist(c: BooleanCircuit) -> str:
    """Plain-text dump: header lines for the I/O maps, then one gate per line."""
    lines = [f"# circuit {c.name}", f"# wires {c.wire_count}"]
    for name, word in c.input_map.items():
        lines.append(f"# input {name} " + " ".join(map(str, word)))
    for i, word in enumerate(c.outputs):
        lines.append(f"# output out{i} " + " ".join(map(str, word)))
    for gid, g in enumerate(c.gates):
        lines.append(" ".join([str(gid), g.kind.name, *map(str, g.inputs), str(g.output)]))
    return "\n".join(lines) + "\n"


# -- plain evaluation ----------------------------------------------------------

def int_to_bits(v: int, width: int) -> list[int]:
    return [(v >> i) & 1 for i in range(width)]


def bits_to_int(bits, signed: bool = True) -> int:
    v = 0
    for i, b in enumerate(bits):
        v |= (int(b) & 1) << i
    if signed and bits and bits[-1]:
        v -= 1 << len(bits)
    return v


def evaluate_plain(c: BooleanCircuit, operands: list[list[int]], signed: bool = True) -> list[list[int]]:
    """Evaluate a circuit on a batch of operand tuples without any cryptography.

    ``operands[k]`` holds the integer value of each input word for test case k.
    Evaluation is bit-sliced: each wire carries one Python int whose bit k is
    the wire's value in case k, so a batch costs one pass over the gates.
    """
    batch = len(operands)
    if batch == 0:
        return []
    mask = (1 << batch) - 1
    val = [0] * c.wire_count
    for idx, word in enumerate(c.inputs):
        for bit, w in enumerate(word):
            v = 0
            for k in range(batch):
                v |= ((operands[k][idx] >> bit) & 1) << k
            val[w] = v
    for g in c.gates:
        kind = g.kind
        if kind == GateKind.XOR:
            val[g.output] = val[g.inputs[0]] ^ val[g.inputs[1]]
        elif kind == GateKind.AND:
            val[g.output] = val[g.inputs[0]] & val[g.inputs[1]]
        elif kind == GateKind.NOT:
            val[g.output] = val[g.inputs[0]] ^ mask
        elif kind == GateKind.CONST0:
            val[g.output] = 0
        else:
            val[g.output] = mask
    results = []
    for k in range(batch):
        results.append([bits_to_int([(val[w] >> k) & 1 for w in word], signed) for word in c.outputs])
    return results


def evaluate_bits(c: BooleanCircuit, input_bits: list[int]) -> list[int]:
    """Single evaluation on a flat list of input bits; returns flat output bits."""
    val = [0] * c.wire_count
    for w, b in zip(c.input_wires, input_bits):
        val[w] = b & 1
    for g in c.gates:
        if g.kind == GateKind.XOR:
            val[g.output] = val[g.inputs[0]] ^ val[g.inputs[1]]
        elif g.kind == GateKind.AND:
            val[g.output] = val[g.inputs[0]] & val[g.inputs[1]]
        elif g.kind == GateKind.NOT:
            val[g.output] = val[g.inputs[0]] ^ 1
        else:
            val[g.output] = 1 if g.kind == GateKind.CONST1 else 0
    return [val[w] for w in c.output_wires]
