import csv
import json

import numpy as np
import pytest

from secinfer.harness import ExperimentConfig, MetricsRecord, emit_report, run_experiment
from secinfer.harness.cli import main
from secinfer.harness.runner import break_even, crossover_table, linear_fit, make_sessions
from secinfer.nn_model import canonical_model, infer_gc_fixed, save_model

X = [[1.0, -1.0, 0.5], [0.0, 0.0, 0.0]]


@pytest.mark.parametrize("kw", [
    {"mode": "tfhe"}, {"mode": "gc", "preset": "big"}, {"mode": "fhe", "preset": "test"},
    {"mode": "gc", "repeat": 0}, {"mode": "gc", "inferences": 0}, {"mode": "fhe", "reuse_keys": -1},
    {"mode": "gc", "layers": 0}, {"mode": "gc", "ot": "iknp"}, {"mode": "fhe", "fhe_input": "x"},
    {"mode": "gc", "transport": "udp:1"},
])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_helpers():
    c = ExperimentConfig("fhe", transport="tcp:127.0.0.1:0", reuse_keys=3)
    assert c.tcp_address == "127.0.0.1:0" and c.session_inferences == 3
    assert ExperimentConfig("gc", reuse_keys=3).session_inferences == 1


def test_make_sessions_wraps():
    assert make_sessions(5, 2) == [[0, 1], [2, 3], [4, 0]]
    assert make_sessions(2, 1) == [[0], [1]]


def test_plain_records():
    recs = run_experiment(ExperimentConfig("plain", repeat=2), inputs=X)
    assert len(recs) == 4 and [r.repetition for r in recs] == [0, 0, 1, 1]
    assert all(r.flights == 0 and r.total_bytes == 0 and r.deviation_vs_plain == 0 for r in recs)


def test_gc_inproc_record():
    (r,) = run_experiment(ExperimentConfig("gc", repeat=1, seed=1), inputs=X[:1])
    assert r.flights == 7 and r.round_trips == 3
    assert r.y_output == r.y_reference == infer_gc_fixed(canonical_model(), X[0])
    assert r.bytes_server_to_client > 100 * r.bytes_client_to_server
    assert r.total_bytes == r.bytes_client_to_server + r.bytes_server_to_client
    assert r.slowdown == r.rtt_seconds / r.rtt_plain_seconds


def test_gc_sessions_are_windowed():
    recs = run_experiment(ExperimentConfig("gc", repeat=1, inferences=3, ot="dealer", seed=2), inputs=X[:1])
    assert [r.n for r in recs] == [1, 2, 3]
    assert len({r.total_bytes for r in recs}) == 1 and all(r.flights == 7 for r in recs)


def test_emit_report(tmp_path):
    recs = run_experiment(ExperimentConfig("plain", repeat=1), inputs=X)
    files = emit_report(recs, tmp_path, plot_data=True, config={"mode": "plain"})
    names = {f.name for f in files}
    assert {"records.csv", "report.json", "approx_relu.csv", "approx_sigmoid.csv"} <= names
    with open(tmp_path / "records.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == MetricsRecord.field_names() and len(rows) == 3
    with open(tmp_path / "plots" / "approx_sigmoid.csv") as fh:
        sig = {r["x"]: r for r in csv.DictReader(fh)}
    assert float(sig["0.0"]["sigmoid"]) == 0.5 and float(sig["0.0"]["sigmoid_poly"]) == 0.5
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["summary"]["plain"]["count"] == 2
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_fit_and_crossover():
    s, b, r2 = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert (s, b, r2) == pytest.approx((2, 1, 1))
    rows = crossover_table(10, 25, 1, counts=(1, 2, 3, 5))
    assert [r["cheaper"] for r in rows] == ["gc", "gc", "fhe", "fhe"]
    assert rows[0]["fhe_bytes"] == 25 and rows[3]["fhe_bytes"] == 29
    assert break_even(10, 25, 1) == pytest.approx(24 / 9)
    assert break_even(1, 25, 1) is None


def _json_line(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_cli_ok(tmp_path, capsys):
    inp = tmp_path / "x.json"
    inp.write_text(json.dumps(X))
    code = main(["run", "--mode", "gc", "--inputs", str(inp), "--repeat", "1", "--seed", "3", "--ot", "dealer",
                 "--out", str(tmp_path / "o"), "--plot-data"])
    line = _json_line(capsys)
    assert code == 0 and line["status"] == "ok" and line["records"] == 2
    assert (tmp_path / "o" / "plots" / "comm_breakdown.csv").exists()


@pytest.mark.parametrize("argv,err", [
    (["run", "--mode", "fhe", "--preset", "test"], "ValueError"),
    (["run", "--mode", "gc", "--model", "/nonexistent/m.json"], "FileNotFoundError"),
    (["run", "--mode", "quantum"], "UsageError"),
    (["run", "--mode", "gc", "--transport", "carrier-pigeon"], "ValueError"),
])
def test_cli_errors(tmp_path, capsys, argv, err):
    code = main(argv + ([] if err == "UsageError" else ["--out", str(tmp_path)]))
    line = _json_line(capsys)
    assert code == 2 and line["status"] == "error" and line["error"] == err


def test_cli_bad_model_file(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text('{"W1": [[1, 2]]}')
    assert main(["run", "--mode", "plain", "--model", str(p), "--out", str(tmp_path)]) == 2
    assert _json_line(capsys)["error"] in ("ModelParseError", "DimMismatch")


def test_cli_party_failure(tmp_path, capsys):
    # a port nobody can bind makes the server fail before the client starts
    code = main(["run", "--mode", "gc", "--transport", "tcp:256.0.0.1:1", "--repeat", "1", "--out", str(tmp_path)])
    line = _json_line(capsys)
    assert code == 1 and line["party"] == "server"


@pytest.mark.slow
def test_tcp_gc_smoke(tmp_path):
    model = tmp_path / "m.json"
    save_model(canonical_model(), model)
    cfg = ExperimentConfig("gc", transport="tcp:127.0.0.1:0", repeat=1, seed=4, model_path=str(model))
    recs = run_experiment(cfg, inputs=X)
    assert all(r.memory_attribution == "per-process" and r.flights == 7 for r in recs)
    assert [r.y_output for r in recs] == [r.y_reference for r in recs]
