"""Test harness: trace comparison, paired workloads, sweeps, and benchmarks."""

from __future__ import annotations

from .bench import BenchReport, bench_suite
from .mutant import dummy_write_skipping_mutant
from .paired import PairedResult, PairedWorkload, Side, SuiteReport, SUITES, run_paired, run_suite
from .sweep import CASES, SweepReport, complexity_sweep
from .tracediff import Equal, FirstDivergence, canonicalize, oram_layout, trace_diff

__all__ = [
    "BenchReport",
    "bench_suite",
    "dummy_write_skipping_mutant",
    "PairedResult",
    "PairedWorkload",
    "Side",
    "SuiteReport",
    "SUITES",
    "run_paired",
    "run_suite",
    "CASES",
    "SweepReport",
    "complexity_sweep",
    "Equal",
    "FirstDivergence",
    "canonicalize",
    "oram_layout",
    "trace_diff",
]
