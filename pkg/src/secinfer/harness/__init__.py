"""Benchmark harness: run the protocols, collect metrics, write reports."""
from .config import ExperimentConfig, MetricsRecord, ScalingReport
from .report import emit_report
from .runner import run_experiment, run_scaling_sweep

__all__ = ["ExperimentConfig", "MetricsRecord", "ScalingReport", "emit_report", "run_experiment",
           "run_scaling_sweep"]
