"""Random netlists for garbling property tests."""
import numpy as np

from secinfer.gc.circuits import BooleanCircuit, Gate, GateKind


def random_circuit(rng: np.random.Generator, n_inputs: int = 8, n_gates: int = 60, n_outputs: int = 6,
                   kinds=(GateKind.XOR, GateKind.AND, GateKind.NOT, GateKind.CONST0, GateKind.CONST1),
                   weights=(0.4, 0.4, 0.1, 0.05, 0.05)) -> BooleanCircuit:
    """Topologically ordered random netlist; every wire may feed any later gate."""
    p = np.asarray(weights, dtype=float)
    p /= p.sum()
    gates = []
    wire = n_inputs
    for _ in range(n_gates):
        kind = kinds[rng.choice(len(kinds), p=p)]
        arity = {GateKind.XOR: 2, GateKind.AND: 2, GateKind.NOT: 1}.get(kind, 0)
        ins = tuple(int(rng.integers(0, wire)) for _ in range(arity))
        gates.append(Gate(kind, ins, wire))
        wire += 1
    outs = tuple(int(w) for w in rng.choice(wire, size=min(n_outputs, wire), replace=False))
    inputs = tuple((i,) for i in range(n_inputs))
    c = BooleanCircuit("random", wire, tuple(gates), inputs, (outs,))
    c.validate()
    return c
