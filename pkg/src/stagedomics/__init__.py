"""Staged multi-omics classification: per-view GCNs, cross-view fusion and
uncertainty-gated routing that only acquires the next omics view when needed."""

from .data import Dataset, OmicsView, generate_synthetic, load_dataset
from .staging import StagePlan, StageThresholds, optimize_thresholds, staged_predict
from .train import TrainConfig, run_trials
from .uncertainty import EnsembleSummary, summarize_trials

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EnsembleSummary",
    "OmicsView",
    "StagePlan",
    "StageThresholds",
    "TrainConfig",
    "generate_synthetic",
    "load_dataset",
    "optimize_thresholds",
    "run_trials",
    "staged_predict",
    "summarize_trials",
]
