"""Experiment configuration, drivers and result export."""

from .config import ConfigError, RunParams, SimConfig, from_dict, load_config, to_dict
from .experiments import (SIM_LEVELS, MetricsReport, RunRecord, TraceRow, bootstrap_gains,
                          gain_percent, run_gain_sweep, run_longterm, run_shortterm, sweep_cells)
from .export import export, read_csv, read_jsonl

__all__ = [
    "ConfigError", "RunParams", "SimConfig", "from_dict", "load_config", "to_dict",
    "SIM_LEVELS", "MetricsReport", "RunRecord", "TraceRow", "bootstrap_gains", "gain_percent",
    "run_gain_sweep", "run_longterm", "run_shortterm", "sweep_cells",
    "export", "read_csv", "read_jsonl",
]
