import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gc_helpers import random_circuit
from secinfer.errors import LabelMismatch, MalformedMessage, MissingInputLabel
from secinfer.gc.circuits import GateKind, Kind, build_netlist, evaluate_bits, int_to_bits
from secinfer.gc.runtime import (GarblerState, check_output_labels, decode_labels, evaluate_batch,
                                 evaluate_netlist, garble_batch, garble_netlist, labels_from_bytes,
                                 labels_to_bytes, random_blocks, select_labels)


def _garble_eval(c, bits, rng):
    state = GarblerState.fresh(rng)
    zero = random_blocks(len(c.input_wires), rng)
    gt = garble_netlist(c, state, zero)
    out = evaluate_netlist(c, gt, select_labels(zero, bits, state.delta))
    return gt, state, out


@given(st.integers(0, 2 ** 32 - 1))
def test_random_circuits_decode_correctly(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, n_inputs=int(rng.integers(1, 10)), n_gates=int(rng.integers(1, 80)))
    bits = [int(b) for b in rng.integers(0, 2, len(c.input_wires))]
    gt, state, out = _garble_eval(c, bits, rng)
    assert decode_labels(out, gt.decode_bits).tolist() == evaluate_bits(c, bits)
    assert check_output_labels(out, gt.output_zero_labels, state.delta).tolist() == evaluate_bits(c, bits)
    assert len(gt.table_bytes) == 32 * c.and_count


def test_xor_only_circuit_has_no_tables(rng):
    c = random_circuit(rng, kinds=(GateKind.XOR, GateKind.NOT), weights=(0.8, 0.2))
    gt, _, _ = _garble_eval(c, [1] * len(c.input_wires), rng)
    assert c.and_count == 0 and gt.table_bytes == b""


def test_delta_has_permute_bit_set(rng):
    for _ in range(20):
        assert int(GarblerState.fresh(rng).delta[0]) & 1 == 1


def test_adder_netlist_garbled(rng):
    c = build_netlist(Kind.ADD)
    a, b = -123456789, 987654321
    bits = int_to_bits(a, 64) + int_to_bits(b, 64)
    gt, _, out = _garble_eval(c, bits, rng)
    assert decode_labels(out, gt.decode_bits).tolist() == int_to_bits(a + b, 64)


def test_batch_instances_use_distinct_tweaks(rng):
    c = build_netlist(Kind.RELU)
    state = GarblerState.fresh(rng)
    zero = random_blocks(len(c.input_wires), rng)
    zeros = np.stack([zero, zero])
    tables, outs = garble_batch(c, state, zeros)
    # identical inputs, different tweak ranges -> different tables
    assert not np.array_equal(tables[0], tables[1])
    assert state.gate_counter == 2 * c.and_count
    act = np.stack([select_labels(zero, int_to_bits(-5, 64), state.delta),
                    select_labels(zero, int_to_bits(9, 64), state.delta)])
    got = evaluate_batch(c, tables, act, 0)
    dec = [decode_labels(g, (o[:, 0] & np.uint64(1)).astype(np.uint8)).tolist() for g, o in zip(got, outs)]
    assert dec == [int_to_bits(0, 64), int_to_bits(9, 64)]


def test_tampered_output_label_rejected(rng):
    c = build_netlist(Kind.RELU)
    gt, state, out = _garble_eval(c, int_to_bits(4, 64), rng)
    bad = out.copy()
    bad[0, 1] ^= np.uint64(1 << 40)
    with pytest.raises(LabelMismatch):
        check_output_labels(bad, gt.output_zero_labels, state.delta)


def test_shape_errors(rng):
    c = build_netlist(Kind.RELU)
    state = GarblerState.fresh(rng)
    with pytest.raises(MissingInputLabel):
        garble_netlist(c, state, random_blocks(3, rng))
    with pytest.raises(MalformedMessage):
        evaluate_batch(c, np.zeros((1, 1, 2, 2), np.uint64), random_blocks(64, rng)[None], 0)
    with pytest.raises(MalformedMessage):
        labels_from_bytes(b"\0" * 17)
    blocks = random_blocks(4, rng)
    assert np.array_equal(labels_from_bytes(labels_to_bytes(blocks), 4), blocks)
