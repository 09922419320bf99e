"""Run every mode on the stress set and write one report directory per mode.

    python3 scripts/run_all.py --out results --repeat 3 --transport tcp:127.0.0.1:0
"""
import argparse
import json
from pathlib import Path

from secinfer.harness import ExperimentConfig, emit_report, run_experiment
from secinfer.harness.report import summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--transport", default="tcp:127.0.0.1:0")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    overview = {}
    for mode in ("plain", "gc", "fhe"):
        cfg = ExperimentConfig(mode, transport=args.transport, repeat=args.repeat, seed=args.seed)
        records = run_experiment(cfg)
        emit_report(records, Path(args.out) / mode, plot_data=True, config=cfg.to_dict())
        s = summarize(records)[mode]
        overview[mode] = {k: s[k]["mean"] for k in ("rtt_seconds", "total_bytes", "deviation_vs_plain")}
        overview[mode]["peak_rss_max"] = max(s["peak_memory_client_bytes"]["max"], s["peak_memory_server_bytes"]["max"])
        print(mode, json.dumps(overview[mode]), flush=True)
    (Path(args.out) / "overview.json").write_text(json.dumps(overview, indent=2))


if __name__ == "__main__":
    main()
