"""Benchmark score normalization, sensitivity analysis, and trend forecasting."""

from .ingest import (
    SUITES,
    SUITE_ORDER,
    BenchmarkRecord,
    DataError,
    HardwareConfig,
    SuiteDefinition,
    format_month,
    parse_month,
    parse_records,
    summarize,
)
from .normalize import chain_normalize, constant_factor, find_overlap
from .trend import TrendModel, doubling_times, fit_trend

__version__ = "0.1.0"

__all__ = [
    "SUITES",
    "SUITE_ORDER",
    "BenchmarkRecord",
    "DataError",
    "HardwareConfig",
    "SuiteDefinition",
    "TrendModel",
    "chain_normalize",
    "constant_factor",
    "doubling_times",
    "find_overlap",
    "fit_trend",
    "format_month",
    "parse_month",
    "parse_records",
    "summarize",
    "__version__",
]
