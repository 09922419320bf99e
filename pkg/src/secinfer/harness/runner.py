"""Experiment runner: drives both parties and turns their timings into records."""
from __future__ import annotations

import multiprocessing as mp
import os
import queue
import threading
import time

import numpy as np

from ..errors import ChannelClosed, PartyError
from ..nn_model import (ModelParams, canonical_model, deep_model, deviation, infer_fhe_approx,
                        infer_gc_fixed, infer_plain, load_inputs, load_model, stress_inputs)
from ..transport import make_inproc_pair
from .config import ExperimentConfig, MetricsRecord, ScalingReport
from .parties import InferenceTiming, PartyPlan, client_process, peak_rss_bytes, run_party, server_process

REFERENCE = {"plain": infer_plain, "gc": infer_gc_fixed, "fhe": infer_fhe_approx}


def load_experiment(cfg: ExperimentConfig):
    model = load_model(cfg.model_path) if cfg.model_path else canonical_model()
    inputs = load_inputs(cfg.inputs_path) if cfg.inputs_path else stress_inputs()
    if len(inputs) == 0:
        raise ValueError("input file holds no vectors")
    return model, inputs


def make_sessions(n_inputs: int, per_session: int) -> list[list[int]]:
    """Input indices per session; the last session wraps around to stay full."""
    count = -(-n_inputs // per_session)
    return [[(s * per_session + k) % n_inputs for k in range(per_session)] for s in range(count)]


def _n_layers(model) -> int:
    return len(model.layers()) if isinstance(model, ModelParams) else len(model)


# -- party orchestration --------------------------------------------------------------

def _first_error(reports: list[dict]) -> dict | None:
    errs = [r for r in reports if "error" in r]
    if not errs:
        return None
    # a closed channel on one side is usually the echo of a failure on the other
    real = [r for r in errs if r["error"] != ChannelClosed.__name__]
    return (real or errs)[0]


def _run_inproc(plan: PartyPlan) -> tuple[list[InferenceTiming], list[InferenceTiming], int, int]:
    a, b = make_inproc_pair()
    reports: list[dict] = []

    def server():
        try:
            reports.append({"role": "server", "timings": run_party("server", a, plan)})
        except BaseException as exc:
            reports.append({"role": "server", "error": type(exc).__name__, "message": str(exc)})
            a.close()

    t = threading.Thread(target=server, name="server", daemon=True)
    t.start()
    try:
        reports.append({"role": "client", "timings": run_party("client", b, plan)})
    except BaseException as exc:
        reports.append({"role": "client", "error": type(exc).__name__, "message": str(exc)})
        b.close()
    t.join()
    err = _first_error(reports)
    if err:
        raise PartyError(err["role"], err["error"], err["message"])
    by_role = {r["role"]: r["timings"] for r in reports}
    rss = peak_rss_bytes()
    return by_role["client"], by_role["server"], rss, rss


def _run_tcp(plan: PartyPlan, address: str, timeout: float):
    ctx = mp.get_context("spawn")
    addr_q, results = ctx.Queue(), ctx.Queue()
    server = ctx.Process(target=server_process, args=(address, plan, addr_q, results, timeout), daemon=True)
    server.start()
    procs = [server]
    reports: list[dict] = []
    try:
        bound = addr_q.get(timeout=timeout)
        if bound is not None:
            client = ctx.Process(target=client_process, args=(bound, plan, results), daemon=True)
            client.start()
            procs.append(client)
        deadline = time.monotonic() + timeout
        while len(reports) < len(procs):
            try:
                reports.append(results.get(timeout=max(0.1, deadline - time.monotonic())))
            except queue.Empty:
                raise PartyError("harness", "Timeout", f"parties did not finish within {timeout} s") from None
            if "error" in reports[-1]:
                break
    finally:
        for p in procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
    err = _first_error(reports)
    if err:
        raise PartyError(err["role"], err["error"], err["message"])
    by_role = {r["role"]: r for r in reports}
    return (by_role["client"]["timings"], by_role["server"]["timings"],
            by_role["client"]["peak_rss"], by_role["server"]["peak_rss"])


def run_parties(plan: PartyPlan, cfg: ExperimentConfig):
    """(client timings, server timings, client peak RSS, server peak RSS, attribution)."""
    if cfg.tcp_address:
        return (*_run_tcp(plan, cfg.tcp_address, cfg.timeout), "per-process")
    return (*_run_inproc(plan), "combined")


# -- experiments ----------------------------------------------------------------------------

def _timed_plain(model, x) -> tuple[float, float]:
    t0 = time.monotonic()
    y = infer_plain(model, x)
    return y, time.monotonic() - t0


def run_experiment(cfg: ExperimentConfig, model=None, inputs=None) -> list[MetricsRecord]:
    """One record per inference, ``cfg.repeat`` passes over the inputs."""
    if model is None or inputs is None:
        loaded_model, loaded_inputs = load_experiment(cfg)
        model = loaded_model if model is None else model
        inputs = loaded_inputs if inputs is None else inputs
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, 3)
    layers = _n_layers(model)
    per_session = cfg.session_inferences
    index_sessions = make_sessions(len(inputs), per_session) * cfg.repeat
    sessions_per_rep = len(index_sessions) // cfg.repeat
    plain = [_timed_plain(model, x) for x in inputs]

    if cfg.mode == "plain":
        records = []
        for s, idx in enumerate(index_sessions):
            for k, i in enumerate(idx):
                y, rtt = _timed_plain(model, inputs[i])
                rss = peak_rss_bytes()
                records.append(MetricsRecord(
                    "plain", "local", cfg.preset, i, s // sessions_per_rep, inputs[i].tolist(), y, y, y,
                    0.0, False, rtt, rtt, rss, rss, "combined", 0, 0, 0, 0, 0,
                    n=k + 1, session_inferences=per_session, layers=layers, keys_sent=False))
        return records

    plan = PartyPlan(cfg.mode, model, [[inputs[i].tolist() for i in idx] for idx in index_sessions],
                     cfg.preset, cfg.seed, cfg.ot,
                     cfg.seed if cfg.seed is not None else int.from_bytes(os.urandom(4), "little"),
                     reuse_keys=cfg.mode == "fhe" and cfg.reuse_keys > 0,
                     symmetric=cfg.fhe_input == "seeded")
    client_t, server_t, rss_c, rss_s, attribution = run_parties(plan, cfg)
    reference = REFERENCE[cfg.mode]

    records, pos = [], 0
    for s, idx in enumerate(index_sessions):
        session_bytes = [client_t[pos + k].stats.total_bytes for k in range(len(idx))]
        S = eps = None
        if plan.reuse_keys:
            S = session_bytes[0]
            eps = float(np.mean(session_bytes[1:])) if len(idx) > 1 else None
        for k, i in enumerate(idx):
            c, sv = client_t[pos], server_t[pos]
            pos += 1
            y_plain, rtt_plain = plain[i]
            dev = deviation(c.y, y_plain)
            st = c.stats
            records.append(MetricsRecord(
                cfg.mode, cfg.transport, cfg.preset, i, s // sessions_per_rep, inputs[i].tolist(),
                float(c.y), y_plain, float(reference(model, inputs[i])), float(dev), dev.absolute,
                max(c.end, sv.end) - c.start, rtt_plain, rss_c, rss_s, attribution,
                st.bytes_b_to_a, st.bytes_a_to_b, st.total_bytes, st.flights, st.round_trips,
                n=k + 1, session_inferences=len(idx), layers=layers,
                setup_bytes=S, marginal_bytes=eps, keys_sent=c.keys_sent))
    return records


# -- scaling sweeps ----------------------------------------------------------------------------

def linear_fit(xs, ys) -> tuple[float, float, float]:
    """Least-squares line and its coefficient of determination."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def crossover_table(gc_bytes: float, setup: float, marginal: float, counts=(1, 2, 3, 5, 10, 20, 50, 100)):
    """Cumulative bytes of fresh garbling (n C) against key reuse (S + (n-1) eps)."""
    rows = []
    for n in counts:
        gc_total = n * gc_bytes
        fhe_total = setup + (n - 1) * marginal
        rows.append({"n": n, "gc_bytes": gc_total, "fhe_bytes": fhe_total,
                     "cheaper": "gc" if gc_total < fhe_total else "fhe"})
    return rows


def break_even(gc_bytes: float, setup: float, marginal: float) -> float | None:
    """Smallest real n with n C >= S + (n-1) eps, or None if garbling stays cheaper."""
    if gc_bytes <= marginal:
        return None
    return (setup - marginal) / (gc_bytes - marginal)


def _single(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    d = cfg.to_dict()
    d.update(kw)
    return ExperimentConfig(**d)


def _fhe_reuse(cfg: ExperimentConfig, model, x0, n: int) -> tuple[list[int], int, float]:
    recs = run_experiment(_single(cfg, mode="fhe", preset="paper", reuse_keys=n, inferences=1, repeat=1),
                          model=model, inputs=x0)
    totals = [r.total_bytes for r in recs[:n]]
    return totals, recs[0].setup_bytes, recs[0].marginal_bytes


def _gc_single(cfg: ExperimentConfig, model, x0) -> int:
    recs = run_experiment(_single(cfg, mode="gc", inferences=1, repeat=1), model=model, inputs=x0)
    return recs[0].total_bytes


def run_scaling_sweep(cfg: ExperimentConfig, layers: int | None = None, inferences: int = 3) -> ScalingReport:
    """Layer and inference-count sweeps for ``cfg.mode`` plus the gc/fhe crossover table."""
    if cfg.mode not in ("gc", "fhe"):
        raise ValueError("scaling sweeps need mode gc or fhe")
    if inferences < 2:
        raise ValueError("inference sweep needs n >= 2")
    rep = ScalingReport(cfg.mode)
    model, inputs = load_experiment(cfg)
    x0 = inputs[:1]
    if cfg.mode == "gc":
        L = layers or 0
        for n_layers in range(1, L + 1):
            m = deep_model(n_layers, cfg.hidden, seed=cfg.seed or 0)
            (r,) = run_experiment(_single(cfg, inferences=1, repeat=1), model=m, inputs=x0)
            rep.layers.append(n_layers)
            rep.layer_bytes_server_to_client.append(r.bytes_server_to_client)
        rep.layer_byte_deltas = list(np.diff(rep.layer_bytes_server_to_client).astype(int).tolist())
        if L >= 2:
            rep.layer_fit_slope, rep.layer_fit_intercept, rep.layer_fit_r2 = linear_fit(
                rep.layers, rep.layer_bytes_server_to_client)
        recs = run_experiment(_single(cfg, inferences=inferences, repeat=1), model=model, inputs=x0)
        rep.inference_counts = list(range(1, inferences + 1))
        rep.inference_total_bytes = np.cumsum([r.total_bytes for r in recs[:inferences]]).astype(int).tolist()
        rep.single_inference_bytes = _gc_single(cfg, model, x0)
        _, rep.setup_bytes, rep.marginal_bytes = _fhe_reuse(cfg, model, x0, 2)
    else:
        totals, rep.setup_bytes, rep.marginal_bytes = _fhe_reuse(cfg, model, x0, inferences)
        rep.inference_counts = list(range(1, inferences + 1))
        rep.inference_total_bytes = np.cumsum(totals).astype(int).tolist()
        rep.single_inference_bytes = _gc_single(cfg, model, x0)
    rep.crossover = crossover_table(rep.single_inference_bytes, rep.setup_bytes, rep.marginal_bytes)
    rep.break_even_n = break_even(rep.single_inference_bytes, rep.setup_bytes, rep.marginal_bytes)
    return rep
