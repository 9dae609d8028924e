"""Habitat-type image classification: ingestion, balanced cross-validated
training on a dilated-ResNet backbone, evaluation and an inference service."""

from .balancing import BalanceConfig, balance_class_counts
from .errors import HabclassError
from .evaluation import (
    MetricsReport,
    compute_metrics_report,
    confusion_matrix,
    per_class_metrics,
    topk_accuracy,
)
from .manifest import ImageRecord, Manifest, ingest_directory, load_manifest, save_manifest
from .model import (
    ClassifierConfig,
    HabitatClassifier,
    build_classifier,
    load_checkpoint,
    save_checkpoint,
)
from .preprocessing import AugmentConfig, PreprocessConfig, preprocess_eval, preprocess_train
from .splitting import FoldAssignment, stratified_kfold_split
from .taxonomy import ClassTaxonomy, default_taxonomy, load_taxonomy
from .training import TrainingConfig, run_cross_validation, train_fold

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "BalanceConfig",
    "ClassTaxonomy",
    "ClassifierConfig",
    "FoldAssignment",
    "HabclassError",
    "HabitatClassifier",
    "ImageRecord",
    "Manifest",
    "MetricsReport",
    "PreprocessConfig",
    "TrainingConfig",
    "__version__",
    "balance_class_counts",
    "build_classifier",
    "compute_metrics_report",
    "confusion_matrix",
    "default_taxonomy",
    "ingest_directory",
    "load_checkpoint",
    "load_manifest",
    "load_taxonomy",
    "per_class_metrics",
    "preprocess_eval",
    "preprocess_train",
    "run_cross_validation",
    "save_checkpoint",
    "save_manifest",
    "stratified_kfold_split",
    "topk_accuracy",
    "train_fold",
]
