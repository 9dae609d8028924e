"""Per-fold training with early stopping, and 5-fold cross-validation.

Each fold trains with AdamW (decoupled weight decay) minimising cross-entropy,
monitors validation accuracy every epoch, stops after ``early_stop_patience``
epochs without strict improvement, and retains the checkpoint of the best
epoch (earliest on ties). Validation data is never balanced or augmented.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import torch
from PIL import Image
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .balancing import BalanceConfig, balance_class_counts, save_balanced_records
from .errors import ConfigError, CrossValidationError, SplitError, TrainingDivergedError
from .evaluation import (
    AggregateReport,
    MetricsReport,
    PredictionRecord,
    aggregate_folds,
    compute_metrics_report,
    make_prediction_record,
)
from .manifest import ImageRecord, Manifest, ORIGIN_AUGMENTED
from .model import ClassifierConfig, build_classifier, save_checkpoint
from .preprocessing import AugmentConfig, PreprocessConfig, preprocess_eval, preprocess_train
from .rng import derive_seed
from .splitting import FoldAssignment, stratified_kfold_split
from .taxonomy import ClassTaxonomy


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 100
    early_stop_patience: int | None = 7  # None disables early stopping
    mixed_precision: bool = True
    gradient_checkpointing: bool = True
    seed: int = 0
    num_workers: int = 0
    device: str | None = None  # None = cuda if available, else cpu

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigError(
                f"early_stop_patience must be >= 1 or None, got {self.early_stop_patience}"
            )

    def resolve_device(self) -> str:
        if self.device:
            return self.device
        return "cuda" if torch.cuda.is_available() else "cpu"


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_accuracy: float
    val_accuracy: float
    val_loss: float


@dataclass(frozen=True)
class EarlyStopState:
    best: float = float("-inf")
    epochs_since_improve: int = 0


def early_stopping_update(
    state: EarlyStopState, current_val_accuracy: float, patience: int
) -> tuple[EarlyStopState, bool]:
    """Advance the early-stopping counter for one epoch.

    A strict improvement over the best value resets the counter; otherwise the
    counter increments, and stop fires exactly when it reaches ``patience``.
    """
    if patience < 1:
        raise ConfigError(f"patience must be >= 1, got {patience}")
    if current_val_accuracy > state.best:
        return EarlyStopState(best=current_val_accuracy, epochs_since_improve=0), False
    counter = state.epochs_since_improve + 1
    return (
        EarlyStopState(best=state.best, epochs_since_improve=counter),
        counter >= patience,
    )


@dataclass
class FoldResult:
    fold: int
    best_epoch: int
    best_val_accuracy: float
    history: list[EpochStats]
    checkpoint_path: Path | None
    prediction_records: list[PredictionRecord]


def _load_rgb(path: str) -> Image.Image:
    with Image.open(path) as im:
        return im.convert("RGB")


class TrainImageSet(Dataset):
    """Training records with stochastic transforms.

    Augmented records replay their stored seed against the parent image, so
    the synthetic sample is stable across epochs; originals draw a fresh seed
    per (base seed, epoch, record id).
    """

    def __init__(
        self,
        records: list[ImageRecord],
        taxonomy: ClassTaxonomy,
        pre_config: PreprocessConfig,
        aug_config: AugmentConfig,
        base_seed: int,
    ):
        self.records = records
        self.taxonomy = taxonomy
        self.pre_config = pre_config
        self.aug_config = aug_config
        self.base_seed = base_seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int):
        record = self.records[index]
        image = _load_rgb(record.path)
        if record.origin == ORIGIN_AUGMENTED:
            seed = record.aug_seed
        else:
            seed = derive_seed(self.base_seed, "epoch", self.epoch, record.id)
        tensor = preprocess_train(image, self.pre_config, self.aug_config, seed=seed)
        return tensor, self.taxonomy.index_of(record.label)


class EvalImageSet(Dataset):
    """Validation records: deterministic resize + normalisation only."""

    def __init__(
        self,
        records: list[ImageRecord],
        taxonomy: ClassTaxonomy,
        pre_config: PreprocessConfig,
    ):
        self.records = records
        self.taxonomy = taxonomy
        self.pre_config = pre_config

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int):
        record = self.records[index]
        tensor = preprocess_eval(_load_rgb(record.path), self.pre_config)
        return tensor, self.taxonomy.index_of(record.label), record.id


class _PermutationBatches:
    """Seeded per-epoch permutation of dataset indices, chunked into batches."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __iter__(self):
        g = torch.Generator().manual_seed(derive_seed(self.seed, "shuffle", self.epoch))
        order = torch.randperm(self.n, generator=g).tolist()
        for start in range(0, self.n, self.batch_size):
            yield order[start : start + self.batch_size]

    def __len__(self) -> int:
        return math.ceil(self.n / self.batch_size)


def _check_finite(loss: torch.Tensor, fold: int, epoch: int, step: int) -> None:
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss {loss.item()} at fold {fold}, epoch {epoch}, "
            f"step {step}; lower the learning rate or inspect the input batch"
        )


def _wrap_oom(e: RuntimeError, config: TrainingConfig) -> RuntimeError:
    if "out of memory" in str(e).lower():
        return RuntimeError(
            f"out of memory with batch_size={config.batch_size}: reduce the batch "
            "size or enable gradient_checkpointing/mixed_precision"
        )
    return e


@torch.no_grad()
def _evaluate(
    classifier, loader: DataLoader, device: str
) -> tuple[float, float, list[tuple[str, int, list[float]]]]:
    """Accuracy, mean loss, and (id, true index, probabilities) per record."""
    classifier.eval()
    criterion = nn.CrossEntropyLoss(reduction="sum")
    correct, total, loss_sum = 0, 0, 0.0
    outputs: list[tuple[str, int, list[float]]] = []
    for batch, labels, ids in loader:
        batch = batch.to(device)
        labels = labels.to(device)
        logits = classifier(batch)
        loss_sum += criterion(logits, labels).item()
        probs = torch.softmax(logits, dim=1)
        pred = logits.argmax(dim=1)
        correct += (pred == labels).sum().item()
        total += labels.numel()
        for i, image_id in enumerate(ids):
            outputs.append((image_id, int(labels[i]), probs[i].cpu().tolist()))
    return correct / total, loss_sum / total, outputs


def train_fold(
    manifest: Manifest,
    folds: FoldAssignment,
    fold_index: int,
    taxonomy: ClassTaxonomy,
    *,
    pre_config: PreprocessConfig | None = None,
    aug_config: AugmentConfig | None = None,
    balance_config: BalanceConfig | None = None,
    model_config: ClassifierConfig | None = None,
    train_config: TrainingConfig | None = None,
    out_dir: str | Path | None = None,
) -> FoldResult:
    """Train one fold and return its history, best checkpoint and predictions.

    The training portion is balanced to ``balance_config.target_per_class``
    per class; the validation fold keeps its natural distribution and is never
    augmented. Prediction records for every validation image are produced with
    the best checkpoint.
    """
    pre_config = pre_config or PreprocessConfig()
    aug_config = aug_config or AugmentConfig()
    balance_config = balance_config or BalanceConfig()
    model_config = model_config or ClassifierConfig()
    train_config = train_config or TrainingConfig()
    if fold_index < 0 or fold_index >= folds.n_folds:
        raise SplitError(f"fold_index {fold_index} out of range 0..{folds.n_folds - 1}")

    by_id = manifest.by_id()
    train_records = [by_id[i] for i in folds.training_ids(fold_index)]
    val_records = [by_id[i] for i in folds.validation_ids(fold_index)]
    # Balance over classes present in this training split; the classifier
    # still scores every taxonomy class, absent ones just see no examples.
    balanced = balance_class_counts(train_records, balance_config)

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_balanced_records(balanced, out_dir / f"fold{fold_index}_balanced.jsonl")

    device = train_config.resolve_device()
    torch.manual_seed(derive_seed(train_config.seed, "train", fold_index))
    classifier = build_classifier(model_config).to(device)
    classifier.gradient_checkpointing = train_config.gradient_checkpointing

    train_set = TrainImageSet(
        balanced, taxonomy, pre_config, aug_config,
        base_seed=derive_seed(train_config.seed, "transform", fold_index),
    )
    batches = _PermutationBatches(
        len(train_set), train_config.batch_size,
        seed=derive_seed(train_config.seed, "batches", fold_index),
    )
    train_loader = DataLoader(
        train_set, batch_sampler=batches, num_workers=train_config.num_workers
    )
    val_loader = DataLoader(
        EvalImageSet(val_records, taxonomy, pre_config),
        batch_size=train_config.batch_size,
        num_workers=train_config.num_workers,
    )

    optimizer = torch.optim.AdamW(
        classifier.parameters(),
        lr=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
    )
    criterion = nn.CrossEntropyLoss()
    amp_enabled = train_config.mixed_precision
    amp_dtype = torch.float16 if device == "cuda" else torch.bfloat16
    scaler = torch.amp.GradScaler(device, enabled=amp_enabled and device == "cuda")

    history: list[EpochStats] = []
    stop_state = EarlyStopState()
    best_epoch = 0
    best_state: dict | None = None
    best_val_outputs: list | None = None

    for epoch in range(1, train_config.max_epochs + 1):
        classifier.train()
        train_set.set_epoch(epoch)
        batches.set_epoch(epoch)
        correct, total = 0, 0
        for step, (batch, labels) in enumerate(train_loader):
            batch = batch.to(device)
            labels = labels.to(device)
            optimizer.zero_grad(set_to_none=True)
            try:
                with torch.amp.autocast(device, dtype=amp_dtype, enabled=amp_enabled):
                    logits = classifier(batch)
                    loss = criterion(logits, labels)
                _check_finite(loss, fold_index, epoch, step)
                scaler.scale(loss).backward()
                scaler.step(optimizer)
                scaler.update()
            except RuntimeError as e:
                raise _wrap_oom(e, train_config) from e
            correct += (logits.argmax(dim=1) == labels).sum().item()
            total += labels.numel()

        val_accuracy, val_loss, val_outputs = _evaluate(classifier, val_loader, device)
        history.append(
            EpochStats(
                epoch=epoch,
                train_accuracy=correct / total,
                val_accuracy=val_accuracy,
                val_loss=val_loss,
            )
        )

        improved = val_accuracy > stop_state.best
        if improved:
            best_epoch = epoch
            best_state = copy.deepcopy(classifier.state_dict())
            best_val_outputs = val_outputs

        if train_config.early_stop_patience is None:
            if improved:
                stop_state = EarlyStopState(best=val_accuracy, epochs_since_improve=0)
            continue
        stop_state, stop = early_stopping_update(
            stop_state, val_accuracy, train_config.early_stop_patience
        )
        if stop:
            break

    assert best_state is not None and best_val_outputs is not None
    classifier.load_state_dict(best_state)
    classifier.eval()
    best_val_accuracy = max(s.val_accuracy for s in history)

    prediction_records = [
        make_prediction_record(image_id, taxonomy.classes[true_index].abbreviation,
                               probs, taxonomy, fold=fold_index)
        for image_id, true_index, probs in best_val_outputs
    ]

    checkpoint_path = None
    if out_dir is not None:
        checkpoint_path = save_checkpoint(
            classifier,
            out_dir / f"fold{fold_index}_best.pt",
            taxonomy=taxonomy,
            epoch=best_epoch,
            val_accuracy=best_val_accuracy,
            tag=f"fold{fold_index}",
        )
        save_history(history, out_dir / f"fold{fold_index}_history.csv")

    return FoldResult(
        fold=fold_index,
        best_epoch=best_epoch,
        best_val_accuracy=best_val_accuracy,
        history=history,
        checkpoint_path=checkpoint_path,
        prediction_records=prediction_records,
    )


@dataclass
class CrossValidationResult:
    fold_results: list[FoldResult]
    reports: list[MetricsReport]
    aggregate: AggregateReport


def run_cross_validation(
    manifest: Manifest,
    taxonomy: ClassTaxonomy,
    *,
    n_folds: int = 5,
    folds: FoldAssignment | None = None,
    pre_config: PreprocessConfig | None = None,
    aug_config: AugmentConfig | None = None,
    balance_config: BalanceConfig | None = None,
    model_config: ClassifierConfig | None = None,
    train_config: TrainingConfig | None = None,
    out_dir: str | Path | None = None,
) -> CrossValidationResult:
    """Train and evaluate every fold; aggregate metrics across folds.

    On a fold failure the completed FoldResults are preserved on the raised
    :class:`CrossValidationError`.
    """
    train_config = train_config or TrainingConfig()
    if folds is None:
        folds = stratified_kfold_split(
            manifest, n_folds, seed=derive_seed(train_config.seed, "split")
        )

    fold_results: list[FoldResult] = []
    for fold_index in range(folds.n_folds):
        try:
            fold_results.append(
                train_fold(
                    manifest, folds, fold_index, taxonomy,
                    pre_config=pre_config,
                    aug_config=aug_config,
                    balance_config=balance_config,
                    model_config=model_config,
                    train_config=train_config,
                    out_dir=out_dir,
                )
            )
        except Exception as e:
            raise CrossValidationError(fold_index, fold_results, e) from e

    reports = [
        compute_metrics_report(r.prediction_records, taxonomy) for r in fold_results
    ]
    return CrossValidationResult(
        fold_results=fold_results,
        reports=reports,
        aggregate=aggregate_folds(reports),
    )


def save_history(history: list[EpochStats], path: str | Path) -> Path:
    """Per-epoch stats as CSV: the source data for learning-curve plots."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_accuracy", "val_accuracy", "val_loss"])
        for s in history:
            writer.writerow([s.epoch, f"{s.train_accuracy:.6f}",
                             f"{s.val_accuracy:.6f}", f"{s.val_loss:.6f}"])
    return path


def load_history(path: str | Path) -> list[EpochStats]:
    path = Path(path)
    out: list[EpochStats] = []
    with path.open(newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(
                EpochStats(
                    epoch=int(row["epoch"]),
                    train_accuracy=float(row["train_accuracy"]),
                    val_accuracy=float(row["val_accuracy"]),
                    val_loss=float(row["val_loss"]),
                )
            )
    return out
