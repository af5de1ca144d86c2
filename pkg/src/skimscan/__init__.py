"""Clip selection for untrimmed-video classification by entropy skimming and divergence scanning."""

from .core import (
    ClipRecord,
    CostParams,
    Dataset,
    DatasetMeta,
    LinearHead,
    SelectionResult,
    SkimScanError,
    VideoRecord,
    validate_dataset,
)
from .selection import PipelineConfig, ScanConfig, SkimConfig, run_dataset, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "ClipRecord",
    "CostParams",
    "Dataset",
    "DatasetMeta",
    "LinearHead",
    "PipelineConfig",
    "ScanConfig",
    "SelectionResult",
    "SkimConfig",
    "SkimScanError",
    "VideoRecord",
    "run_dataset",
    "run_pipeline",
    "validate_dataset",
]
