"""Layer sweep and the gc/fhe crossover table.

    python3 scripts/scaling.py --layers 4 --inferences 5 --out results/scaling
"""
import argparse
import json

from secinfer.harness import ExperimentConfig, emit_report, run_experiment, run_scaling_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--inferences", type=int, default=3)
    ap.add_argument("--hidden", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/scaling")
    args = ap.parse_args()

    cfg = ExperimentConfig("gc", repeat=1, seed=args.seed, hidden=args.hidden, layers=args.layers)
    rep = run_scaling_sweep(cfg, args.layers, args.inferences)
    records = run_experiment(cfg, inputs=[[1.0, -1.0, 0.5]])
    emit_report(records, args.out, scaling=rep, config=cfg.to_dict())
    print(f"layer bytes {rep.layer_bytes_server_to_client}  slope {rep.layer_fit_slope:.0f}  R^2 {rep.layer_fit_r2:.5f}")
    print(f"gc single {rep.single_inference_bytes}  fhe S {rep.setup_bytes}  eps {rep.marginal_bytes:.0f}  "
          f"break-even n {rep.break_even_n:.2f}")
    for row in rep.crossover:
        print(json.dumps(row))


if __name__ == "__main__":
    main()
