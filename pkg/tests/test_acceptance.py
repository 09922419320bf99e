"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import contextlib
import csv
import math
import time

import numpy as np
import pytest

from gc_helpers import random_circuit
from secinfer.ckks import scheme as ck
from secinfer.ckks.ntt import basis, intt, negacyclic_schoolbook, ntt
from secinfer.ckks.params import SECURITY_BUDGET, CkksParams, validate_params
from secinfer.ckks.ring import RnsPoly
from secinfer.errors import BudgetExceeded, DegreeUnusable
from secinfer.gc.circuits import GateKind, evaluate_bits
from secinfer.gc.runtime import GarblerState, decode_labels, evaluate_netlist, garble_netlist, random_blocks, select_labels
from secinfer.harness import ExperimentConfig, emit_report, run_experiment, run_scaling_sweep
from secinfer.harness.runner import _gc_single
from secinfer.nn_model import canonical_model, infer_fhe_approx, infer_gc_fixed, stress_inputs


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def report(number, title):
        notes = []
        try:
            yield notes
        except BaseException as exc:
            with capsys.disabled():
                detail = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
                print(f"\n[criterion {number}] FAIL {title}: {detail}")
            raise
        with capsys.disabled():
            print(f"\n[criterion {number}] PASS {title}: {'; '.join(notes)}")
    return report


def _uniform(n, seed):
    return np.random.default_rng(seed).uniform(-2, 2, (n, 3))


def test_c01_ckks_roundtrip(criterion, test_params, test_keys):
    with criterion(1, "CKKS roundtrip") as notes:
        rng = np.random.default_rng(101)
        t0 = time.monotonic()
        worst = 0.0
        for i in range(100):
            v = rng.uniform(-10, 10, test_params.slot_count)
            ct = ck.encrypt(ck.encode(test_params, v), test_keys.public_key, i)
            worst = max(worst, float(np.max(np.abs(ck.decrypt_values(ct, test_keys.secret_key) - v))))
        elapsed = time.monotonic() - t0
        notes += [f"max error {worst:.2e}", f"{elapsed:.2f} s"]
        assert worst < 1e-4 and elapsed < 5.0


def test_c02_ckks_homomorphism(criterion, test_params, test_keys):
    with criterion(2, "CKKS homomorphism") as notes:
        rng = np.random.default_rng(102)
        sk = test_keys.secret_key
        a, b, c = (rng.uniform(-2, 2, test_params.slot_count) for _ in range(3))
        ea, eb, ec = (ck.encrypt(ck.encode(test_params, v), test_keys.public_key, i) for i, v in enumerate((a, b, c)))
        ab = ck.rescale(ck.eval_mul(ea, eb, test_keys))
        depth2 = ck.rescale(ck.eval_mul(ck.rotate(ab, 1, test_keys), ck.mod_switch_to(ck.eval_add(ec, ea), ab.level),
                                        test_keys))
        want = np.roll(a * b, -1) * (c + a)
        err = float(np.max(np.abs(ck.decrypt_values(depth2, sk) - want)))
        notes.append(f"depth-2 add/mul/rotate error {err:.2e}")
        assert depth2.level == test_params.max_level - 2 and err < 1e-2

        n, qs = 64, test_params.primes[:2]
        bs = basis(qs, n)
        for seed in range(20):
            r = np.random.default_rng(seed)
            x = np.stack([r.integers(0, q, n, dtype=np.uint64) for q in qs])
            y = np.stack([r.integers(0, q, n, dtype=np.uint64) for q in qs])
            assert np.array_equal(intt(ntt(x, bs), bs), x)
            prod = (RnsPoly(x, qs, False).to_ntt() * RnsPoly(y, qs, False).to_ntt()).to_coeff().limbs
            for i, q in enumerate(qs):
                assert np.array_equal(prod[i], negacyclic_schoolbook(x[i], y[i], q))
        notes.append("NTT and negacyclic products exact on 20 pairs")


def _chain(total: int) -> tuple[int, ...]:
    k = -(-total // 60)
    return tuple(total // k + (1 if i < total % k else 0) for i in range(k))


def test_c03_budget_table(criterion):
    with criterion(3, "security budget table") as notes:
        for n, budget in SECURITY_BUDGET.items():
            if n == 1024:
                with pytest.raises(DegreeUnusable):
                    validate_params(CkksParams(n, _chain(budget), 2.0 ** 20))
                continue
            ok = validate_params(CkksParams(n, _chain(budget), 2.0 ** 20))
            assert sum(ok.modulus_bits) == budget
            with pytest.raises(BudgetExceeded):
                validate_params(CkksParams(n, _chain(budget + 1), 2.0 ** 20))
        notes.append("6 rows: 1024 unusable, others accept at budget and reject at budget+1")


def test_c04_fhe_end_to_end(criterion):
    with criterion(4, "FHE end to end") as notes:
        model = canonical_model()
        xs = _uniform(25, 104)
        t0 = time.monotonic()
        recs = run_experiment(ExperimentConfig("fhe", repeat=1, seed=104), model=model, inputs=xs)
        worst = max(abs(r.y_output - infer_fhe_approx(model, r.x)) / max(abs(infer_fhe_approx(model, r.x)), 0.01)
                    for r in recs)
        notes += [f"worst relative error {worst:.2e}", f"{time.monotonic() - t0:.1f} s for 25"]
        assert len(recs) == 25 and worst < 0.01
        assert all(r.round_trips == 1 and r.flights == 2 for r in recs)


def test_c05_gc_end_to_end(criterion):
    with criterion(5, "GC end to end") as notes:
        model = canonical_model()
        recs = run_experiment(ExperimentConfig("gc", repeat=1, seed=105), model=model, inputs=_uniform(100, 105))
        mismatches = sum(r.y_output != infer_gc_fixed(model, r.x) for r in recs)
        notes += [f"{len(recs) - mismatches}/100 bit-exact", "7 flights each"]
        assert len(recs) == 100 and mismatches == 0
        assert all(r.flights == 7 for r in recs)


def test_c06_garbling_correctness(criterion):
    with criterion(6, "garbling correctness") as notes:
        rng = np.random.default_rng(106)
        for _ in range(50):
            c = random_circuit(rng, n_inputs=int(rng.integers(2, 16)), n_gates=int(rng.integers(10, 200)))
            bits = [int(v) for v in rng.integers(0, 2, len(c.input_wires))]
            state = GarblerState.fresh(rng)
            zero = random_blocks(len(c.input_wires), rng)
            gt = garble_netlist(c, state, zero)
            out = evaluate_netlist(c, gt, select_labels(zero, bits, state.delta))
            assert decode_labels(out, gt.decode_bits).tolist() == evaluate_bits(c, bits)
            assert len(gt.table_bytes) == 32 * c.and_count
        xor = random_circuit(rng, kinds=(GateKind.XOR,), weights=(1.0,))
        gt = garble_netlist(xor, GarblerState.fresh(rng), random_blocks(len(xor.input_wires), rng))
        assert gt.table_bytes == b""
        notes.append("50/50 circuits decoded; XOR-only table empty; 32 bytes per AND")


def test_c07_fresh_garbling_vs_key_reuse(criterion):
    with criterion(7, "per-inference scaling") as notes:
        model, x0 = canonical_model(), [[1.0, -1.0, 0.5]]
        cfg = ExperimentConfig("gc", repeat=1, seed=107)
        single = _gc_single(cfg, model, x0)
        three = sum(r.total_bytes for r in
                    run_experiment(ExperimentConfig("gc", repeat=1, inferences=3, seed=107), model=model, inputs=x0))
        ratio = three / (3 * single)
        fhe = run_experiment(ExperimentConfig("fhe", repeat=1, reuse_keys=3, seed=107), model=model, inputs=x0)
        S, eps = fhe[0].setup_bytes, fhe[0].marginal_bytes
        notes += [f"GC 3 inferences / 3x single = {ratio:.6f}", f"FHE eps/S = {eps / S:.2%}"]
        assert abs(ratio - 1) < 0.01
        assert len(fhe) == 3 and [r.keys_sent for r in fhe] == [True, False, False]
        assert eps < 0.05 * S


def test_c08_layer_sweep(criterion):
    with criterion(8, "layer sweep linearity") as notes:
        rep = run_scaling_sweep(ExperimentConfig("gc", repeat=1, seed=108), layers=4, inferences=2)
        notes += [f"bytes {rep.layer_bytes_server_to_client}", f"R^2 {rep.layer_fit_r2:.5f}"]
        assert rep.layers == [1, 2, 3, 4] and rep.layer_fit_r2 > 0.99


@pytest.fixture(scope="module")
def stress_runs():
    """Each mode over the committed stress set; gc and fhe as separate processes over TCP."""
    out = {"plain": run_experiment(ExperimentConfig("plain", repeat=1))}
    for mode in ("gc", "fhe"):
        out[mode] = run_experiment(ExperimentConfig(mode, transport="tcp:127.0.0.1:0", repeat=1, seed=109))
    return out


def test_c09_metric_orderings(criterion, stress_runs):
    with criterion(9, "metric orderings") as notes:
        rtt = {m: float(np.mean([r.rtt_seconds for r in rs])) for m, rs in stress_runs.items()}
        nbytes = {m: float(np.mean([r.total_bytes for r in rs])) for m, rs in stress_runs.items()}
        mem = {m: max(max(r.peak_memory_client_bytes, r.peak_memory_server_bytes) for r in rs)
               for m, rs in stress_runs.items() if m != "plain"}
        notes += [f"rtt {', '.join(f'{m} {v:.3g}s' for m, v in rtt.items())}",
                  f"bytes gc {nbytes['gc']:.0f} fhe {nbytes['fhe']:.0f}",
                  f"peak RSS gc {mem['gc'] / 2**20:.0f} MiB fhe {mem['fhe'] / 2**20:.0f} MiB"]
        assert all(r.memory_attribution == "per-process" for m in ("gc", "fhe") for r in stress_runs[m])
        assert rtt["plain"] < rtt["gc"] < rtt["fhe"]
        assert nbytes["plain"] < nbytes["gc"] < nbytes["fhe"]
        assert mem["gc"] < mem["fhe"]


def test_c10_deviation_report(criterion, stress_runs):
    with criterion(10, "deviation report") as notes:
        assert len(stress_runs["gc"]) == len(stress_inputs())
        worst = {m: max(r.deviation_vs_plain for r in stress_runs[m]) for m in ("gc", "fhe")}
        notes.append(f"worst deviation gc {worst['gc']:.2f}% fhe {worst['fhe']:.2f}%")
        assert worst["gc"] < worst["fhe"]


def test_c11_plot_data(criterion, tmp_path):
    with criterion(11, "approximation plot data") as notes:
        recs = run_experiment(ExperimentConfig("plain", repeat=1))
        emit_report(recs, tmp_path, plot_data=True)
        x = np.arange(-60, 61) / 10.0
        expected = {
            "approx_relu.csv": (np.maximum(x, 0.0), x * x),
            "approx_sigmoid.csv": (1.0 / (1.0 + np.exp(-x)), 0.5 + 0.197 * x + -0.004 * x * x),
        }
        for name, (f, g) in expected.items():
            with open(tmp_path / "plots" / name) as fh:
                rows = list(csv.reader(fh))[1:]
            got = np.array(rows, dtype=np.float64)
            assert got.shape == (121, 3)
            assert np.array_equal(got[:, 0], x) and np.array_equal(got[:, 1], f) and np.array_equal(got[:, 2], g)
        assert math.isclose(got[60, 1], 0.5)
        notes.append("121 points per curve, bitwise equal")
