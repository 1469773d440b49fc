"""Experiment harness: configuration, datasets, drivers and the command line."""
from .config import ExperimentConfig, dump_config, load_config
from .data import Dataset, IngestError, check_disjoint, extract_patches, ingest, synthesize
from .experiment import (
    ExperimentResult,
    Pipeline,
    evaluate,
    paired_mean_difference,
    report_gallery,
    run_experiment,
    sweep,
    train_variants,
)

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "ExperimentResult",
    "IngestError",
    "Pipeline",
    "check_disjoint",
    "dump_config",
    "evaluate",
    "extract_patches",
    "ingest",
    "load_config",
    "paired_mean_difference",
    "report_gallery",
    "run_experiment",
    "sweep",
    "synthesize",
    "train_variants",
]
