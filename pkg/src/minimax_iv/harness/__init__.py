"""Config-driven sweeps, verification suites and reports."""

from .config import ConfigError, FamilySpec, RunConfig, load_config
from .reports import CSV_COLUMNS, RateReport, RateRow, emit_reports, load_report, read_csv
from .seeds import derive_seed, replication_seed
from .sweep import build_families, fit_estimator, fit_loglog_slope, run_rate_sweep

__all__ = [
    "CSV_COLUMNS", "ConfigError", "FamilySpec", "RateReport", "RateRow", "RunConfig", "build_families",
    "derive_seed", "emit_reports", "fit_estimator", "fit_loglog_slope", "load_config", "load_report",
    "read_csv", "replication_seed", "run_rate_sweep",
]
