"""Benchmark harness: configuration, runner, and coverage reports."""

from .config import METHODS, PROFILES, ExperimentConfig, expand_methods
from .report import CoverageReport, GridRow, SeedRow, emit_report
from .runner import (
    PrecalibratedIntervals,
    family_weight_fn,
    make_weight_family,
    precalibrate_local,
    run_experiment,
)

__all__ = [
    "METHODS",
    "PROFILES",
    "ExperimentConfig",
    "expand_methods",
    "CoverageReport",
    "GridRow",
    "SeedRow",
    "emit_report",
    "PrecalibratedIntervals",
    "family_weight_fn",
    "make_weight_family",
    "precalibrate_local",
    "run_experiment",
]
