"""Sequential multi-netlist garbled sessions.

A *plan* is an ordered list of :class:`PlanStep`, each applying one
precompiled netlist to named values.  Values are fixed-point words: the
garbler owns the model values, the evaluator owns the input values, and every
step output stays on the wire as labels for later steps (nothing is
re-transferred between netlists).

Message schedule for an inference with ``m`` evaluator inputs::

    E -> G  OT_REQ (input 0)
    G -> E  OT_RESP (input 0) + GARBLER_LABELS
    ...                                     (one request/response per input)
    G -> E  OT_RESP (input m-1) + TABLES (all garbled tables, decode bits)
    E -> G  REVEAL (output labels)

which is ``2m + 1`` flights, 7 for three inputs.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import MalformedMessage
from ..ot import Dealer, make_backend, ot_receive, ot_send
from ..transport import CommStats, Endpoint, MessageKind, make_inproc_pair
from .circuits import BooleanCircuit, Kind, bits_to_int, build_netlist, int_to_bits
from .fixedpoint import (FixedPointSpec, fixed_decode, fx_add, fx_divscale, fx_mul, fx_relu, fx_sigmoid,
                         fx_sub)
from .runtime import (ROW_BYTES, GarblerState, check_output_labels, decode_labels, evaluate_batch,
                      garble_batch, labels_from_bytes, labels_to_bytes, random_blocks, select_labels)


@dataclass(frozen=True)
class PlanStep:
    kind: Kind
    inputs: tuple[str, ...]
    output: str


_SEMANTICS = {
    Kind.ADD: fx_add,
    Kind.SUB: fx_sub,
    Kind.MUL: fx_mul,
    Kind.DIVSCALE: lambda v, spec: fx_divscale(v, spec),
    Kind.RELU: fx_relu,
    Kind.POLY2_SIGMOID: fx_sigmoid,
}

_ACTIVATIONS = {"relu": Kind.RELU, "sigmoid": Kind.POLY2_SIGMOID, None: None, "none": None}


def value_width(kind: Kind, spec: FixedPointSpec) -> int:
    return 2 * spec.width if kind == Kind.MUL else spec.width


def compose_layer(rows: int, cols: int, with_bias: bool = True, activation: Kind | None = None,
                  spec: FixedPointSpec = FixedPointSpec(), prefix: str = "L1",
                  inputs: list[str] | None = None) -> list[PlanStep]:
    """Plan of one dense layer: all products, then dot sums, then biases, then activations.

    Weights are named ``{prefix}.W[i][j]`` and biases ``{prefix}.b[i]``; the
    layer reads ``inputs`` (default ``x[j]``) and writes ``{prefix}.out[i]``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("a layer needs at least one row and one column")
    inputs = inputs or [f"x[{j}]" for j in range(cols)]
    if len(inputs) != cols:
        raise ValueError(f"layer expects {cols} inputs, got {len(inputs)}")
    plan: list[PlanStep] = []
    for i in range(rows):
        for j in range(cols):
            plan.append(PlanStep(Kind.MUL, (f"{prefix}.W[{i}][{j}]", inputs[j]), f"{prefix}.p[{i}][{j}]"))
    for i in range(rows):
        for j in range(cols):
            plan.append(PlanStep(Kind.DIVSCALE, (f"{prefix}.p[{i}][{j}]",), f"{prefix}.t[{i}][{j}]"))
    acc = [f"{prefix}.t[{i}][0]" for i in range(rows)]
    for j in range(1, cols):
        for i in range(rows):
            out = f"{prefix}.s[{i}][{j}]"
            plan.append(PlanStep(Kind.ADD, (acc[i], f"{prefix}.t[{i}][{j}]"), out))
            acc[i] = out
    if with_bias:
        for i in range(rows):
            out = f"{prefix}.z[{i}]"
            plan.append(PlanStep(Kind.ADD, (acc[i], f"{prefix}.b[{i}]"), out))
            acc[i] = out
    if activation is not None:
        for i in range(rows):
            out = f"{prefix}.a[{i}]"
            plan.append(PlanStep(activation, (acc[i],), out))
            acc[i] = out
    # rename the layer result so the next layer has a stable handle
    for i in range(rows):
        last = next(k for k in range(len(plan) - 1, -1, -1) if plan[k].output == acc[i])
        plan[last] = PlanStep(plan[last].kind, plan[last].inputs, f"{prefix}.out[{i}]")
    return plan


@dataclass
class NetworkPlan:
    steps: list[PlanStep]
    garbler_inputs: list[str]
    evaluator_inputs: list[str]
    outputs: list[str]
    spec: FixedPointSpec = field(default_factory=FixedPointSpec)

    def garbler_values(self, layers_int) -> dict[str, int]:
        """Map the fixed-point model (from ``nn_model.encode_layers``) to plan value names."""
        vals = {}
        for li, (W, b, _) in enumerate(layers_int):
            for i, row in enumerate(W):
                for j, w in enumerate(row):
                    vals[f"L{li + 1}.W[{i}][{j}]"] = w
            for i, bias in enumerate(b):
                vals[f"L{li + 1}.b[{i}]"] = bias
        return vals

    def evaluator_values(self, x_int) -> dict[str, int]:
        return {name: int(v) for name, v in zip(self.evaluator_inputs, x_int)}


def network_plan(shapes: list[tuple[int, int, str]], spec: FixedPointSpec = FixedPointSpec()) -> NetworkPlan:
    """Plan for a dense stack; ``shapes`` lists ``(rows, cols, activation)`` per layer."""
    steps: list[PlanStep] = []
    garbler: list[str] = []
    inputs = [f"x[{j}]" for j in range(shapes[0][1])]
    evaluator = list(inputs)
    for li, (rows, cols, act) in enumerate(shapes):
        prefix = f"L{li + 1}"
        steps += compose_layer(rows, cols, True, _ACTIVATIONS[act], spec, prefix, inputs)
        garbler += [f"{prefix}.W[{i}][{j}]" for i in range(rows) for j in range(cols)]
        garbler += [f"{prefix}.b[{i}]" for i in range(rows)]
        inputs = [f"{prefix}.out[{i}]" for i in range(rows)]
    return NetworkPlan(steps, garbler, evaluator, inputs, spec)


def model_plan(model, spec: FixedPointSpec = FixedPointSpec()) -> NetworkPlan:
    layers = model.layers() if hasattr(model, "layers") else model
    return network_plan([(l.W.shape[0], l.W.shape[1], l.activation) for l in layers], spec)


def evaluate_plan_plain(steps: list[PlanStep], values: dict[str, int],
                        spec: FixedPointSpec = FixedPointSpec()) -> dict[str, int]:
    """Run a plan on integers with the netlist semantics (no garbling)."""
    env = dict(values)
    for st in steps:
        env[st.output] = _SEMANTICS[st.kind](*(env[v] for v in st.inputs), spec)
    return env


# -- stages ------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    kind: Kind
    steps: tuple[PlanStep, ...]
    first_gate: int  # AND tweak index of the first instance

    def circuit(self, spec: FixedPointSpec) -> BooleanCircuit:
        return build_netlist(self.kind, spec)


def plan_stages(steps: list[PlanStep], spec: FixedPointSpec = FixedPointSpec()) -> list[Stage]:
    """Group consecutive same-kind, mutually independent steps so they garble as one batch.

    Both parties derive the same stages and tweak offsets from the plan alone.
    """
    stages, cur, produced = [], [], set()
    gate = 0

    def flush():
        nonlocal gate, cur, produced
        if cur:
            stages.append(Stage(cur[0].kind, tuple(cur), gate))
            gate += build_netlist(cur[0].kind, spec).and_count * len(cur)
        cur, produced = [], set()

    for st in steps:
        if cur and (st.kind != cur[0].kind or any(v in produced for v in st.inputs)):
            flush()
        cur.append(st)
        produced.add(st.output)
    flush()
    return stages


def _word_labels(zero: np.ndarray, values: list[int], width: int, delta: np.ndarray) -> np.ndarray:
    bits = [b for v in values for b in int_to_bits(v, width)]
    return select_labels(zero, bits, delta)


# -- parties -----------------------------------------------------------------------

LabelObserver = Callable[[str, np.ndarray], None]


class GarblerSession:
    """Server side: owns the model values, Δ and every zero-label."""

    def __init__(self, plan: NetworkPlan, values: dict[str, int], ot="dh", rng=None, dealer: Dealer | None = None):
        self.plan = plan
        self.spec = plan.spec
        self.values = values
        self.rng = rng
        self.ot = make_backend(ot, rng, dealer) if isinstance(ot, str) else ot
        self.state: GarblerState | None = None
        self.zero: dict[str, np.ndarray] = {}
        self.table_bytes = 0

    def _garble(self) -> tuple[bytes, np.ndarray]:
        spec, w = self.spec, self.spec.width
        self.state = GarblerState.fresh(self.rng)
        for name in self.plan.garbler_inputs + self.plan.evaluator_inputs:
            self.zero[name] = random_blocks(w, self.rng)
        chunks = []
        for stage in plan_stages(self.plan.steps, spec):
            c = stage.circuit(spec)
            assert self.state.gate_counter == stage.first_gate
            ins = np.stack([np.concatenate([self.zero[v] for v in st.inputs]) for st in stage.steps])
            tables, outs = garble_batch(c, self.state, ins)
            chunks.append(tables.astype("<u8", copy=False).tobytes())
            for st, o in zip(stage.steps, outs):
                self.zero[st.output] = o
        tables = b"".join(chunks)
        self.table_bytes = len(tables)
        out_zero = np.concatenate([self.zero[o] for o in self.plan.outputs])
        dbits = (out_zero[:, 0] & np.uint64(1)).astype(np.uint8)
        return tables + np.packbits(dbits, bitorder="little").tobytes(), out_zero

    def run(self, channel: Endpoint) -> None:
        """Garble the plan, serve the OTs and ship the tables."""
        if not self.plan.steps:
            return
        w = self.spec.width
        names = self.plan.evaluator_inputs
        # label generation starts once the evaluator opens the session
        first_req = channel.recv_kind(MessageKind.OT_REQ) if names else None
        payload, self._out_zero = self._garble()
        delta = self.state.delta
        g_labels = labels_to_bytes(np.concatenate(
            [_word_labels(self.zero[n], [self.values[n]], w, delta) for n in self.plan.garbler_inputs]
        )) if self.plan.garbler_inputs else b""
        for k, name in enumerate(names):
            z = self.zero[name]
            ot_send(channel, np.stack([z, z ^ delta[None, :]], axis=1), self.ot, first_req if k == 0 else None)
            if k == 0:
                channel.send(MessageKind.GARBLER_LABELS, g_labels)
            if k == len(names) - 1:
                channel.send(MessageKind.TABLES, payload)
        if not names:
            channel.send(MessageKind.GARBLER_LABELS, g_labels)
            channel.send(MessageKind.TABLES, payload)

    def reveal_output(self, channel: Endpoint) -> list[float]:
        if not self.plan.steps:
            return []
        raw = channel.recv_kind(MessageKind.REVEAL)
        labels = labels_from_bytes(raw, self._out_zero.shape[0])
        bits = check_output_labels(labels, self._out_zero, self.state.delta)
        return _decode_words(bits, len(self.plan.outputs), self.spec)


class EvaluatorSession:
    """Client side: owns the input values and sees exactly one label per wire."""

    def __init__(self, plan: NetworkPlan, values: dict[str, int], ot="dh", rng=None,
                 dealer: Dealer | None = None, observer: LabelObserver | None = None):
        self.plan = plan
        self.spec = plan.spec
        self.values = values
        self.ot = make_backend(ot, rng, dealer) if isinstance(ot, str) else ot
        self.observer = observer
        self.labels: dict[str, np.ndarray] = {}
        self.decode_bits: np.ndarray | None = None

    def _see(self, tag: str, labels: np.ndarray) -> None:
        if self.observer is not None:
            self.observer(tag, labels)

    def run(self, channel: Endpoint) -> None:
        if not self.plan.steps:
            return
        w = self.spec.width
        names = self.plan.evaluator_inputs
        g_raw = payload = None
        for k, name in enumerate(names):
            self.labels[name] = ot_receive(channel, int_to_bits(self.values[name], w), self.ot)
            self._see(name, self.labels[name])
            if k == 0:
                g_raw = channel.recv_kind(MessageKind.GARBLER_LABELS)
            if k == len(names) - 1:
                payload = channel.recv_kind(MessageKind.TABLES)
        if not names:
            g_raw = channel.recv_kind(MessageKind.GARBLER_LABELS)
            payload = channel.recv_kind(MessageKind.TABLES)
        g = labels_from_bytes(g_raw, w * len(self.plan.garbler_inputs)) if self.plan.garbler_inputs else None
        for i, name in enumerate(self.plan.garbler_inputs):
            self.labels[name] = g[i * w:(i + 1) * w]
            self._see(name, self.labels[name])
        self._evaluate(payload)

    def _evaluate(self, payload: bytes) -> None:
        spec = self.spec
        stages = plan_stages(self.plan.steps, spec)
        n_out = sum(self._out_width(o) for o in self.plan.outputs)
        total = sum(build_netlist(s.kind, spec).and_count * len(s.steps) for s in stages) * 2 * ROW_BYTES
        if len(payload) != total + (n_out + 7) // 8:
            raise MalformedMessage(f"garbled payload has {len(payload)} bytes, expected {total + (n_out + 7) // 8}")
        off = 0
        for stage in stages:
            c = stage.circuit(spec)
            k = len(stage.steps)
            nbytes = c.and_count * k * 2 * ROW_BYTES
            tables = np.frombuffer(payload, dtype="<u8", count=nbytes // 8, offset=off).reshape(k, c.and_count, 2, 2)
            off += nbytes
            ins = np.stack([np.concatenate([self.labels[v] for v in st.inputs]) for st in stage.steps])
            if self.observer is not None:
                outs, wires = evaluate_batch(c, tables, ins, stage.first_gate, return_all=True)
                for st, wl in zip(stage.steps, wires):
                    self._see(st.output + "/wires", wl)
            else:
                outs = evaluate_batch(c, tables, ins, stage.first_gate)
            for st, o in zip(stage.steps, outs):
                self.labels[st.output] = o
        self.decode_bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8, offset=off),
                                         bitorder="little")[:n_out]

    def _out_width(self, name: str) -> int:
        for st in self.plan.steps:
            if st.output == name:
                return value_width(st.kind, self.spec)
        return self.spec.width

    def output_labels(self) -> np.ndarray:
        return np.concatenate([self.labels[o] for o in self.plan.outputs])

    def reveal_output(self, channel: Endpoint) -> list[float]:
        if not self.plan.steps:
            return []
        labels = self.output_labels()
        bits = decode_labels(labels, self.decode_bits)
        channel.send(MessageKind.REVEAL, labels_to_bytes(labels))
        return _decode_words(bits, len(self.plan.outputs), self.spec)


def _decode_words(bits: np.ndarray, n: int, spec: FixedPointSpec) -> list[float]:
    w = len(bits) // max(n, 1)
    return [fixed_decode(bits_to_int([int(b) for b in bits[i * w:(i + 1) * w]]), spec) for i in range(n)]


def reveal_output(session, channel: Endpoint) -> list[float]:
    """Finish a session: the evaluator sends its output labels, both sides decode."""
    return session.reveal_output(channel)


@dataclass
class SessionResult:
    garbler_output: list[float]
    evaluator_output: list[float]
    evaluator_labels: np.ndarray | None
    decode_bits: np.ndarray | None
    stats: CommStats
    table_bytes: int


def run_garbler(channel: Endpoint, plan: NetworkPlan, values: dict[str, int], **kw) -> tuple[list[float], int]:
    sess = GarblerSession(plan, values, **kw)
    sess.run(channel)
    return reveal_output(sess, channel), sess.table_bytes


def run_evaluator(channel: Endpoint, plan: NetworkPlan, values: dict[str, int], **kw) -> EvaluatorSession:
    sess = EvaluatorSession(plan, values, **kw)
    sess.run(channel)
    sess.revealed = reveal_output(sess, channel)
    return sess


def run_sequential_session(plan: NetworkPlan, garbler_values: dict[str, int], evaluator_values: dict[str, int],
                           channels: tuple[Endpoint, Endpoint] | None = None, ot: str = "dh",
                           seed: int | None = None, observer: LabelObserver | None = None) -> SessionResult:
    """Run both parties (garbler on endpoint ``a``, evaluator on ``b``) in two threads."""
    a, b = channels or make_inproc_pair()
    dealer = Dealer(seed or 0) if ot == "dealer" else None
    g_rng = np.random.default_rng([seed, 1]) if seed is not None else None
    e_rng = np.random.default_rng([seed, 2]) if seed is not None else None
    box: dict = {}

    def garbler():
        try:
            box["g"] = run_garbler(a, plan, garbler_values, ot=ot, rng=g_rng, dealer=dealer)
        except BaseException as exc:  # surfaced after join
            box["g_err"] = exc
            a.close()

    t = threading.Thread(target=garbler, name="garbler", daemon=True)
    t.start()
    try:
        ev = run_evaluator(b, plan, evaluator_values, ot=ot, rng=e_rng, dealer=dealer, observer=observer)
    except BaseException:
        b.close()
        t.join()
        if "g_err" in box:
            raise box["g_err"]
        raise
    t.join()
    if "g_err" in box:
        raise box["g_err"]
    g_out, tbytes = box["g"]
    return SessionResult(g_out, ev.revealed, ev.output_labels() if plan.steps else None, ev.decode_bits,
                         b.stats, tbytes)
