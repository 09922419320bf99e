"""``bench`` command line.

    bench run --mode gc --transport inproc --preset paper --out results/gc

On success prints one JSON line with ``"status": "ok"``; on failure one JSON
line with ``"status": "error"`` and exits nonzero (2 for bad arguments or
configuration, 1 for failures while running).
"""
from __future__ import annotations

import argparse
import json
import sys

from ..errors import ModelParseError, PartyError, SecInferError
from .config import MODES, PRESETS, ExperimentConfig
from .report import emit_report, summarize
from .runner import run_experiment, run_scaling_sweep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bench", description="Private inference benchmark harness")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one experiment and write its report")
    r.add_argument("--mode", choices=MODES, required=True)
    r.add_argument("--transport", default="inproc", help="inproc or tcp:<host>:<port> (port 0 picks a free one)")
    r.add_argument("--preset", choices=PRESETS, default="paper")
    r.add_argument("--model", help="model JSON (default: committed canonical model)")
    r.add_argument("--inputs", help="JSON array of 3-vectors (default: committed stress set)")
    r.add_argument("--repeat", type=int, default=5)
    r.add_argument("--reuse-keys", type=int, default=0, help="fhe: send keys once, then N ciphertexts per session")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--plot-data", action="store_true")
    r.add_argument("--layers", type=int, help="also sweep 1..L weight layers (gc) and the gc/fhe crossover")
    r.add_argument("--inferences", type=int, default=1, help="inferences per session")
    r.add_argument("--ot", choices=("dh", "dealer"), default="dh")
    r.add_argument("--fhe-input", choices=("seeded", "public"), default="seeded")
    r.add_argument("--format", choices=("csv", "json", "both"), default="both")
    return p


def _emit(obj: dict) -> None:
    print(json.dumps(obj), flush=True)


def run(args) -> dict:
    cfg = ExperimentConfig(
        mode=args.mode, transport=args.transport, preset=args.preset, model_path=args.model,
        inputs_path=args.inputs, repeat=args.repeat, reuse_keys=args.reuse_keys, layers=args.layers,
        inferences=args.inferences, seed=args.seed, ot=args.ot, fhe_input=args.fhe_input)
    records = run_experiment(cfg)
    scaling = None
    if cfg.layers is not None and cfg.mode != "plain":
        scaling = run_scaling_sweep(cfg, cfg.layers, max(2, cfg.session_inferences))
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    files = emit_report(records, args.out, formats, args.plot_data, scaling, cfg.to_dict())
    return {"status": "ok", "records": len(records), "summary": summarize(records)[cfg.mode],
            "files": [str(f) for f in files]}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        _emit({"status": "error", "error": "UsageError", "message": str(exc)})
        return 2
    try:
        _emit(run(args))
        return 0
    except PartyError as exc:
        _emit({"status": "error", "error": exc.error, "party": exc.role, "message": exc.message})
        return 1
    except (ValueError, SecInferError, OSError) as exc:
        config_error = isinstance(exc, (ValueError, FileNotFoundError, ModelParseError))
        _emit({"status": "error", "error": type(exc).__name__, "message": str(exc)})
        return 2 if config_error else 1


if __name__ == "__main__":
    sys.exit(main())
