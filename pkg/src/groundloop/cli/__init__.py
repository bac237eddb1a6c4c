from .experiments import ExperimentKind, ExperimentSpec, ResultSink, run_batch, run_experiment, validate_batch
from .report import ReportFormat, ReportRow, emit_report, load_rows, load_table, render_structured, render_table, write_trajectory

__all__ = [

    # Experiments
    "ExperimentKind",
    "ExperimentSpec",
    "ResultSink",
    "run_batch",
    "run_experiment",
    "validate_batch",

    # Reports
    "ReportFormat",
    "ReportRow",
    "emit_report",
    "load_rows",
    "load_table",
    "render_structured",
    "render_table",
    "write_trajectory",
]
