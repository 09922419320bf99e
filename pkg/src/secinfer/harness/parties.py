"""Party loops run by the harness, one per role.

The server (model owner, transport role ``a``) and the client (input owner,
role ``b``) each walk the same list of sessions.  After every inference a
party snapshots its channel ledger and starts a fresh window, so each record
carries the traffic of exactly one inference.  Module-level functions only,
so they can be handed to spawned processes.
"""
from __future__ import annotations

import resource
import sys
import time
from dataclasses import dataclass

import numpy as np

from ..transport import CommStats, Endpoint


@dataclass
class PartyPlan:
    mode: str
    model: object  # ModelParams or list[Layer]
    sessions: list[list[list[float]]]  # inputs per session; only the client reads the values
    preset: str = "paper"
    seed: int | None = None
    ot: str = "dh"
    dealer_seed: int = 0
    reuse_keys: bool = False
    symmetric: bool = True


@dataclass
class InferenceTiming:
    start: float
    end: float
    stats: CommStats
    y: float | None = None
    keys_sent: bool = True


def peak_rss_bytes() -> int:
    """OS-reported peak resident set size of this process.

    On Linux this reads VmHWM, which starts afresh at exec; ru_maxrss would
    carry over the high-water mark of the parent image a spawned child was
    forked from.
    """
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return int(rss) if sys.platform == "darwin" else int(rss) * 1024


def _seed(plan: PartyPlan, *parts):
    return None if plan.seed is None else [plan.seed, *parts]


def _dealer_seed(plan: PartyPlan, s: int, k: int) -> int:
    return (plan.dealer_seed << 32) + (s << 16) + k


def _close_window(channel: Endpoint) -> CommStats:
    stats = channel.stats
    channel.reset_stats()
    return stats


# -- gc ---------------------------------------------------------------------------

def _gc_server(channel: Endpoint, plan: PartyPlan) -> list[InferenceTiming]:
    from ..gc.session import run_garbler, model_plan
    from ..nn_model import encode_layers
    from ..ot import Dealer

    net = model_plan(plan.model)
    gvals = net.garbler_values(encode_layers(plan.model, net.spec))
    out = []
    for s, session in enumerate(plan.sessions):
        for k in range(len(session)):
            start = time.monotonic()
            rng = None if plan.seed is None else np.random.default_rng(_seed(plan, s, k, 1))
            dealer = Dealer(_dealer_seed(plan, s, k)) if plan.ot == "dealer" else None
            (y,), _ = run_garbler(channel, net, gvals, ot=plan.ot, rng=rng, dealer=dealer)
            out.append(InferenceTiming(start, time.monotonic(), _close_window(channel), y))
    return out


def _gc_client(channel: Endpoint, plan: PartyPlan) -> list[InferenceTiming]:
    from ..gc.fixedpoint import fixed_encode
    from ..gc.session import run_evaluator, model_plan
    from ..ot import Dealer

    net = model_plan(plan.model)
    out = []
    for s, session in enumerate(plan.sessions):
        for k, x in enumerate(session):
            start = time.monotonic()
            evals = net.evaluator_values([fixed_encode(float(v), net.spec) for v in x])
            rng = None if plan.seed is None else np.random.default_rng(_seed(plan, s, k, 2))
            dealer = Dealer(_dealer_seed(plan, s, k)) if plan.ot == "dealer" else None
            ev = run_evaluator(channel, net, evals, ot=plan.ot, rng=rng, dealer=dealer)
            out.append(InferenceTiming(start, time.monotonic(), _close_window(channel), ev.revealed[0]))
    return out


# -- fhe -------------------------------------------------------------------------

def _fhe_server(channel: Endpoint, plan: PartyPlan) -> list[InferenceTiming]:
    from ..fhe_protocol import FheSetupMessage, server_infer
    from ..errors import MalformedMessage
    from ..transport import MessageKind

    out = []
    for session in plan.sessions:
        keys = None
        for _ in session:
            msg = FheSetupMessage.from_bytes(channel.recv_kind(MessageKind.SETUP))
            start = time.monotonic()
            if msg.has_keys:
                keys = msg.keys()
            elif keys is None:
                raise MalformedMessage("first request of a session must carry evaluation keys")
            result = server_infer(msg, plan.model, keys)
            channel.send(MessageKind.RESULT, result.to_bytes())
            out.append(InferenceTiming(start, time.monotonic(), _close_window(channel), None, msg.has_keys))
    return out


def _fhe_client(channel: Endpoint, plan: PartyPlan) -> list[InferenceTiming]:
    from ..ckks.params import preset
    from ..fhe_protocol import FheClient, FheResultMessage
    from ..transport import MessageKind

    params = preset(plan.preset)
    out = []
    for s, session in enumerate(plan.sessions):
        client = None
        for k, x in enumerate(session):
            start = time.monotonic()
            fresh = client is None or not plan.reuse_keys
            if fresh:
                client = FheClient(params, _seed(plan, s, k), plan.symmetric)
            channel.send(MessageKind.SETUP, client.setup(x, with_keys=fresh).to_bytes())
            y = client.finish(FheResultMessage.from_bytes(channel.recv_kind(MessageKind.RESULT)))
            out.append(InferenceTiming(start, time.monotonic(), _close_window(channel), y, fresh))
    return out


def warmup(plan: PartyPlan) -> None:
    """Compile kernels and the public circuit once so the first timed inference does not pay for it."""
    if plan.mode == "fhe":
        from ..ckks import scheme as ck
        from ..ckks.params import preset

        params = preset(plan.preset)
        keys = ck.keygen(params, 0, (1,))
        ct = ck.encrypt(ck.encode(params, [1.0]), keys.public_key, ck.make_rng(0))
        ck.rotate(ck.rescale(ck.eval_mul(ct, ct, keys)), 1, keys)
    elif plan.mode == "gc":
        from ..gc.session import model_plan, run_sequential_session
        from ..ot import _generator_table

        _generator_table()
        net = model_plan(plan.model)
        zeros = {name: 0 for name in net.garbler_inputs}
        run_sequential_session(net, zeros, net.evaluator_values([0] * 3), ot="dealer", seed=0)


SERVERS = {"gc": _gc_server, "fhe": _fhe_server}
CLIENTS = {"gc": _gc_client, "fhe": _fhe_client}


def run_party(role: str, channel: Endpoint, plan: PartyPlan) -> list[InferenceTiming]:
    table = SERVERS if role == "server" else CLIENTS
    warmup(plan)
    return table[plan.mode](channel, plan)


# -- child process entry points ---------------------------------------------------------

def _report_error(results, role: str, exc: BaseException) -> None:
    results.put({"role": role, "error": type(exc).__name__, "message": str(exc)})


def server_process(address: str, plan: PartyPlan, addr_queue, results, timeout: float) -> None:
    from ..transport import TcpListener

    try:
        listener = TcpListener(address)
    except BaseException as exc:
        addr_queue.put(None)
        _report_error(results, "server", exc)
        return
    addr_queue.put(listener.address)
    try:
        channel = listener.accept(timeout)
        listener.close()
        with channel:
            timings = run_party("server", channel, plan)
        results.put({"role": "server", "timings": timings, "peak_rss": peak_rss_bytes()})
    except BaseException as exc:
        _report_error(results, "server", exc)
    finally:
        listener.close()


def client_process(address: str, plan: PartyPlan, results) -> None:
    from ..transport import connect_tcp

    try:
        with connect_tcp(address, retries=100) as channel:
            timings = run_party("client", channel, plan)
        results.put({"role": "client", "timings": timings, "peak_rss": peak_rss_bytes()})
    except BaseException as exc:
        _report_error(results, "client", exc)
