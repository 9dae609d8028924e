"""Exception types shared across the toolkit."""


class HabclassError(Exception):
    """Base class for all toolkit errors."""


class TaxonomyError(HabclassError):
    """Invalid taxonomy definition (duplicate abbreviation, empty class list, ...)."""


class IngestError(HabclassError):
    """Dataset directory cannot be ingested into a manifest."""


class ManifestError(HabclassError):
    """Manifest file is malformed or internally inconsistent."""


class SplitError(HabclassError):
    """Fold assignment cannot be built or violates its preconditions."""


class BalanceError(HabclassError):
    """Class balancing preconditions are violated."""


class PreprocessError(HabclassError):
    """Image does not satisfy the transform pipeline's input contract."""


class ConfigError(HabclassError):
    """A configuration value is out of range or names an unknown component."""


class WeightFetchError(HabclassError):
    """Pretrained weights could not be downloaded; retry or use a cached copy."""


class ShapeError(HabclassError):
    """Tensor shape does not match the model's input contract."""


class CheckpointError(HabclassError):
    """Checkpoint file is corrupt or not a recognized checkpoint."""


class CheckpointCompatibilityError(CheckpointError):
    """Checkpoint does not match the active taxonomy or classifier config."""


class TrainingDivergedError(HabclassError):
    """Loss became non-finite during training."""


class CrossValidationError(HabclassError):
    """A fold failed during cross-validation; completed folds are preserved.

    Attributes:
        fold_index: Index of the fold that failed.
        completed: FoldResult list for the folds that finished before the failure.
    """

    def __init__(self, fold_index, completed, cause):
        super().__init__(f"fold {fold_index} failed: {cause}")
        self.fold_index = fold_index
        self.completed = completed


class EvaluationError(HabclassError):
    """Metric computation received inconsistent or empty inputs."""


class PredictionLogError(HabclassError):
    """Prediction log file contains a malformed line."""
