"""Tabular reports and per-figure plot series."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..nn_model import sigmoid, sigmoid_poly
from .config import MetricsRecord, ScalingReport

CURVE_X = np.arange(-60, 61) / 10.0  # [-6, 6] in steps of 0.1


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    return "" if v is None else v


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def summarize(records: list[MetricsRecord]) -> dict:
    """Mean/min/max of the headline metrics, per mode."""
    groups = defaultdict(list)
    for r in records:
        groups[r.mode].append(r)
    out = {}
    for mode, rs in groups.items():
        stats = {}
        for key in ("rtt_seconds", "total_bytes", "bytes_client_to_server", "bytes_server_to_client",
                    "flights", "round_trips", "deviation_vs_plain", "peak_memory_client_bytes",
                    "peak_memory_server_bytes", "slowdown"):
            vals = np.array([np.nan if getattr(r, key) is None else getattr(r, key) for r in rs], dtype=np.float64)
            stats[key] = {"mean": float(np.nanmean(vals)), "min": float(np.nanmin(vals)),
                          "max": float(np.nanmax(vals))}
        stats["count"] = len(rs)
        stats["memory_attribution"] = rs[0].memory_attribution
        out[mode] = stats
    return out


def relu_curve(x=CURVE_X) -> list[tuple[float, float, float]]:
    return [(float(v), float(r), float(q)) for v, r, q in zip(x, np.maximum(x, 0.0), x * x)]


def sigmoid_curve(x=CURVE_X) -> list[tuple[float, float, float]]:
    return [(float(v), float(s), float(p)) for v, s, p in zip(x, sigmoid(x), sigmoid_poly(x))]


def _plot_files(records: list[MetricsRecord], out: Path) -> list[Path]:
    summary = summarize(records)
    files = []
    files.append(write_csv(out / "rtt_by_mode.csv",
                           ["mode", "rtt_mean_s", "rtt_min_s", "rtt_max_s", "slowdown_mean"],
                           [(m, s["rtt_seconds"]["mean"], s["rtt_seconds"]["min"], s["rtt_seconds"]["max"],
                             s["slowdown"]["mean"]) for m, s in summary.items()]))
    files.append(write_csv(out / "peakmem_by_mode.csv",
                           ["mode", "client_bytes", "server_bytes", "attribution"],
                           [(m, s["peak_memory_client_bytes"]["max"], s["peak_memory_server_bytes"]["max"],
                             s["memory_attribution"]) for m, s in summary.items()]))
    files.append(write_csv(out / "comm_breakdown.csv",
                           ["mode", "client_to_server_bytes", "server_to_client_bytes", "flights", "round_trips"],
                           [(m, s["bytes_client_to_server"]["mean"], s["bytes_server_to_client"]["mean"],
                             s["flights"]["mean"], s["round_trips"]["mean"]) for m, s in summary.items()]))
    files.append(write_csv(out / "deviation_scatter.csv",
                           ["mode", "input_index", "repetition", "x0", "x1", "x2", "y_plain", "y_output",
                            "deviation", "deviation_is_absolute"],
                           [(r.mode, r.input_index, r.repetition, *r.x, r.y_plain, r.y_output,
                             r.deviation_vs_plain, r.deviation_is_absolute) for r in records]))
    files.append(write_csv(out / "approx_relu.csv", ["x", "relu", "square"], relu_curve()))
    files.append(write_csv(out / "approx_sigmoid.csv", ["x", "sigmoid", "sigmoid_poly"], sigmoid_curve()))
    return files


def emit_report(records: list[MetricsRecord], out, formats=("csv", "json"), plot_data: bool = False,
                scaling: ScalingReport | None = None, config: dict | None = None) -> list[Path]:
    """Write records (and optional plot series / sweep results) under directory ``out``."""
    if not records:
        raise ValueError("no records to report")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if "csv" in formats:
        names = MetricsRecord.field_names()
        files.append(write_csv(out / "records.csv", names,
                               [[r.to_dict()[k] for k in names] for r in records]))
    if "json" in formats:
        doc = {"config": config, "summary": summarize(records), "records": [r.to_dict() for r in records]}
        if scaling is not None:
            doc["scaling"] = scaling.to_dict()
        path = out / "report.json"
        path.write_text(json.dumps(doc, indent=2))
        files.append(path)
    if scaling is not None:
        files.append(write_csv(out / "crossover.csv", ["n", "gc_bytes", "fhe_bytes", "cheaper"],
                               [(c["n"], c["gc_bytes"], c["fhe_bytes"], c["cheaper"]) for c in scaling.crossover]))
        if scaling.layers:
            files.append(write_csv(out / "layer_sweep.csv", ["layers", "server_to_client_bytes"],
                                   zip(scaling.layers, scaling.layer_bytes_server_to_client)))
    if plot_data:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        files += _plot_files(records, plots)
    return files
