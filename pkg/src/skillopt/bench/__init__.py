"""Benchmark harness, report emission and the cached end-to-end pipeline."""

from .harness import METHODS, BenchConfig, Models, parse_method, resolve_task, run_benchmark, run_method
from .pipeline import PipelineError, PipelineResult, file_hash, run_pipeline
from .report import Aggregate, BenchReport, Cell, emit_report, read_csv, read_trace, trace_name

__all__ = [
    "Aggregate", "BenchConfig", "BenchReport", "Cell", "METHODS", "Models", "PipelineError", "PipelineResult",
    "emit_report", "file_hash", "parse_method", "read_csv", "read_trace", "resolve_task", "trace_name", "run_benchmark",
    "run_method", "run_pipeline",
]
