from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import run_experiment, run_nmse_sweep, run_sumrate_sweep
from .results import ResultTable, Row, emit, parse_csv, to_csv, to_jsonl

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultTable",
    "Row",
    "emit",
    "load_config",
    "parse_config",
    "parse_csv",
    "run_experiment",
    "run_nmse_sweep",
    "run_sumrate_sweep",
    "to_csv",
    "to_jsonl",
]
