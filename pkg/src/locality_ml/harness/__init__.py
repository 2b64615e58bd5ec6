"""Benchmark scenarios and the ``locality-bench`` command line."""

from .scenarios import (ConfigError, EquivalenceError, ScenarioConfig, run_fused_ibl,
                        run_fused_linear, run_swsgd, run_trace_report)
from .timing import TimingResult, timing

__all__ = ["ConfigError", "EquivalenceError", "ScenarioConfig", "TimingResult", "run_fused_ibl",
           "run_fused_linear", "run_swsgd", "run_trace_report", "timing"]
