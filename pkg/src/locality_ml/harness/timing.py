"""Wall-clock measurement: one warmup run, then R timed repetitions."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Callable


@dataclass
class TimingResult:
    samples_ns: list[int] = field(default_factory=list)
    last_value: Any = None

    @property
    def median_ns(self) -> float:
        return statistics.median(self.samples_ns)

    @property
    def min_ns(self) -> int:
        return min(self.samples_ns)

    @property
    def median_s(self) -> float:
        return self.median_ns / 1e9

    @property
    def min_s(self) -> float:
        return self.min_ns / 1e9


def timing(measure: Callable[[], Any], reps: int = 5, warmup: int = 1) -> TimingResult:
    """Time ``measure()`` with the monotonic performance counter.

    The callable must not do IO; its last return value is kept so callers
    can check outputs of the timed run.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for _ in range(warmup):
        measure()
    result = TimingResult()
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        result.last_value = measure()
        result.samples_ns.append(time.perf_counter_ns() - t0)
    return result


def phase_table(phases: dict[str, TimingResult]) -> dict[str, float]:
    """Flatten {phase: timing} into {phase_median_s, phase_min_s} columns."""
    row = {}
    for name, t in phases.items():
        row[f"{name}_median_s"] = t.median_s
        row[f"{name}_min_s"] = t.min_s
    return row
