"""Experiment harness: ingestion, simulation sweeps, detection studies and the CLI."""
from .fit import fit_command
from .io import OrientationFormat, ingest_orientations, parse_orientations, write_orientations
from .roc import RocConfig, roc_curve, run_roc, simulate_set
from .sweep import SweepConfig, run_estimation_sweep, summarize

__all__ = [
    "OrientationFormat",
    "RocConfig",
    "SweepConfig",
    "fit_command",
    "ingest_orientations",
    "parse_orientations",
    "roc_curve",
    "run_estimation_sweep",
    "run_roc",
    "simulate_set",
    "summarize",
    "write_orientations",
]
