"""Classification metrics, confusion matrices, top-k analysis and prediction logs.

All per-class metrics use the one-vs-rest convention: for class c, TP is the
diagonal entry, FP the rest of column c, FN the rest of row c, and precision,
recall and F1 follow from those counts. Any metric whose denominator is zero is
reported as 0 so cross-fold means stay defined.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EvaluationError, PredictionLogError
from .taxonomy import ClassTaxonomy

PROBABILITY_FLOOR = 1e-12
TOP_K = 3


@dataclass(frozen=True)
class PredictionRecord:
    """Stored metadata for one validated image: labels, probabilities, top-3."""

    image_id: str
    true_label: str
    predicted_label: str
    probabilities: tuple[float, ...]
    top3: tuple[tuple[str, float], ...]
    fold: int = 0


def top_k_entries(
    probabilities, taxonomy: ClassTaxonomy, k: int = TOP_K
) -> list[tuple[str, float]]:
    """The k most probable classes, descending; ties break to the lower index."""
    probs = list(probabilities)
    if len(probs) != len(taxonomy):
        raise EvaluationError(
            f"probability vector has {len(probs)} entries for a "
            f"{len(taxonomy)}-class taxonomy"
        )
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return [
        (taxonomy.classes[i].abbreviation, float(probs[i]))
        for i in order[: min(k, len(probs))]
    ]


def make_prediction_record(
    image_id: str,
    true_label: str,
    probabilities,
    taxonomy: ClassTaxonomy,
    fold: int = 0,
) -> PredictionRecord:
    if true_label not in taxonomy:
        raise EvaluationError(f"true label {true_label!r} not in taxonomy")
    top3 = tuple(top_k_entries(probabilities, taxonomy))
    return PredictionRecord(
        image_id=image_id,
        true_label=true_label,
        predicted_label=top3[0][0],
        probabilities=tuple(float(p) for p in probabilities),
        top3=top3,
        fold=fold,
    )


@dataclass(frozen=True)
class ConfusionMatrix:
    """KxK counts, rows = true class, columns = predicted class."""

    counts: np.ndarray
    abbreviations: tuple[str, ...]
    taxonomy_version: str

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row(self, abbreviation: str) -> np.ndarray:
        return self.counts[self.abbreviations.index(abbreviation)]


def confusion_matrix(
    records: list[PredictionRecord], taxonomy: ClassTaxonomy
) -> ConfusionMatrix:
    k = len(taxonomy)
    counts = np.zeros((k, k), dtype=np.int64)
    for r in records:
        counts[taxonomy.index_of(r.true_label), taxonomy.index_of(r.predicted_label)] += 1
    return ConfusionMatrix(
        counts=counts,
        abbreviations=taxonomy.abbreviations,
        taxonomy_version=taxonomy.version,
    )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_metrics(cm: ConfusionMatrix) -> dict[str, ClassMetrics]:
    """One-vs-rest precision/recall/F1 per class (0 on zero denominators)."""
    out: dict[str, ClassMetrics] = {}
    counts = cm.counts
    for i, abbr in enumerate(cm.abbreviations):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        out[abbr] = ClassMetrics(precision=precision, recall=recall, f1=f1)
    return out


def one_vs_rest_accuracy(cm: ConfusionMatrix) -> dict[str, float]:
    """Per-class (TP+TN)/(TP+TN+FP+FN); the binary accuracy of each
    class-vs-rest problem over the same record set."""
    out: dict[str, float] = {}
    counts = cm.counts
    total = counts.sum()
    for i, abbr in enumerate(cm.abbreviations):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        tn = int(total) - tp - fp - fn
        out[abbr] = _safe_div(tp + tn, total)
    return out


def topk_accuracy(records: list[PredictionRecord], k: int) -> float:
    """Fraction of records whose true label is among the first k stored
    predictions (k=1 uses the predicted label)."""
    if not records:
        raise EvaluationError("topk_accuracy needs at least one record")
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    if k == 1:
        hits = sum(1 for r in records if r.predicted_label == r.true_label)
    else:
        hits = sum(
            1 for r in records if r.true_label in [abbr for abbr, _ in r.top3[:k]]
        )
    return hits / len(records)


def cross_entropy(probabilities, true_index: int) -> float:
    """Negative log-probability of the true class, floored at 1e-12."""
    p = max(float(probabilities[true_index]), PROBABILITY_FLOOR)
    return -math.log(p)


@dataclass(frozen=True)
class MetricsReport:
    """Per-fold (or aggregated) metric set."""

    per_class: dict[str, ClassMetrics]
    overall_accuracy: float
    top1_accuracy: float
    top3_accuracy: float
    mean_f1: float
    val_loss: float
    taxonomy_version: str = ""

    def to_dict(self) -> dict:
        return {
            "per_class": {
                a: {"precision": m.precision, "recall": m.recall, "f1": m.f1}
                for a, m in self.per_class.items()
            },
            "overall_accuracy": self.overall_accuracy,
            "top1_accuracy": self.top1_accuracy,
            "top3_accuracy": self.top3_accuracy,
            "mean_f1": self.mean_f1,
            "val_loss": self.val_loss,
            "taxonomy_version": self.taxonomy_version,
        }


def compute_metrics_report(
    records: list[PredictionRecord], taxonomy: ClassTaxonomy
) -> MetricsReport:
    if not records:
        raise EvaluationError("cannot build a metrics report from zero records")
    cm = confusion_matrix(records, taxonomy)
    per_class = per_class_metrics(cm)
    top1 = topk_accuracy(records, 1)
    top3 = topk_accuracy(records, 3)
    mean_f1 = sum(m.f1 for m in per_class.values()) / len(per_class)
    losses = [
        cross_entropy(r.probabilities, taxonomy.index_of(r.true_label)) for r in records
    ]
    return MetricsReport(
        per_class=per_class,
        overall_accuracy=top1,
        top1_accuracy=top1,
        top3_accuracy=top3,
        mean_f1=mean_f1,
        val_loss=sum(losses) / len(losses),
        taxonomy_version=taxonomy.version,
    )


@dataclass(frozen=True)
class AggregateReport:
    """Cross-fold mean and population standard deviation of every metric."""

    mean: MetricsReport
    std: MetricsReport
    n_folds: int


def aggregate_folds(reports: list[MetricsReport]) -> AggregateReport:
    if not reports:
        raise EvaluationError("aggregate_folds needs at least one report")
    class_sets = {tuple(sorted(r.per_class)) for r in reports}
    versions = {r.taxonomy_version for r in reports}
    if len(class_sets) > 1 or len(versions) > 1:
        raise EvaluationError(
            f"reports carry mismatched taxonomies: versions={sorted(versions)}"
        )

    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.mean()), float(arr.std())  # population std

    per_class_mean: dict[str, ClassMetrics] = {}
    per_class_std: dict[str, ClassMetrics] = {}
    for abbr in reports[0].per_class:
        fields = {}
        for name in ("precision", "recall", "f1"):
            fields[name] = stats([getattr(r.per_class[abbr], name) for r in reports])
        per_class_mean[abbr] = ClassMetrics(**{k: v[0] for k, v in fields.items()})
        per_class_std[abbr] = ClassMetrics(**{k: v[1] for k, v in fields.items()})

    overall = {}
    for name in ("overall_accuracy", "top1_accuracy", "top3_accuracy", "mean_f1", "val_loss"):
        overall[name] = stats([getattr(r, name) for r in reports])

    version = reports[0].taxonomy_version
    return AggregateReport(
        mean=MetricsReport(
            per_class=per_class_mean,
            taxonomy_version=version,
            **{k: v[0] for k, v in overall.items()},
        ),
        std=MetricsReport(
            per_class=per_class_std,
            taxonomy_version=version,
            **{k: v[1] for k, v in overall.items()},
        ),
        n_folds=len(reports),
    )


def export_prediction_log(
    records: list[PredictionRecord],
    path: str | Path,
    include_probabilities: bool = True,
) -> Path:
    """Write records as line-delimited JSON; probabilities at full precision."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for r in records:
            row = {
                "image_id": r.image_id,
                "fold": r.fold,
                "true_label": r.true_label,
                "predicted_label": r.predicted_label,
                "top3": [[abbr, p] for abbr, p in r.top3],
            }
            if include_probabilities:
                row["probabilities"] = list(r.probabilities)
            f.write(json.dumps(row) + "\n")
    return path


def import_prediction_log(path: str | Path) -> list[PredictionRecord]:
    path = Path(path)
    records: list[PredictionRecord] = []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(
                    PredictionRecord(
                        image_id=row["image_id"],
                        true_label=row["true_label"],
                        predicted_label=row["predicted_label"],
                        probabilities=tuple(row.get("probabilities", ())),
                        top3=tuple((a, float(p)) for a, p in row["top3"]),
                        fold=int(row["fold"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise PredictionLogError(f"{path}: malformed line {lineno}: {e}") from e
    return records


def render_metrics_table(report: MetricsReport) -> str:
    """Human-readable per-class table plus the overall summary lines."""
    lines = [f"{'Class':<10} {'Precision':>9} {'Recall':>9} {'F1-Score':>9}"]
    for abbr in sorted(report.per_class):
        m = report.per_class[abbr]
        lines.append(f"{abbr:<10} {m.precision:>9.2f} {m.recall:>9.2f} {m.f1:>9.2f}")
    lines.append("")
    lines.append(f"top-1 accuracy: {report.top1_accuracy:.4f}")
    lines.append(f"top-3 accuracy: {report.top3_accuracy:.4f}")
    lines.append(f"mean F1 (macro): {report.mean_f1:.4f}")
    lines.append(f"validation loss: {report.val_loss:.4f}")
    return "\n".join(lines)


def plot_confusion_matrix(
    cm: ConfusionMatrix, path: str | Path, normalize: bool = False
) -> Path:
    """Render the confusion matrix as a heatmap image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts = cm.counts.astype(np.float64)
    if normalize:
        row_sums = counts.sum(axis=1, keepdims=True)
        counts = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)

    k = len(cm.abbreviations)
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * k), max(5, 0.45 * k)))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(k), cm.abbreviations, rotation=90)
    ax.set_yticks(range(k), cm.abbreviations)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    if k <= 20:
        threshold = counts.max() / 2 if counts.max() > 0 else 0
        for i in range(k):
            for j in range(k):
                value = counts[i, j]
                text = f"{value:.2f}" if normalize else f"{int(value)}"
                ax.text(
                    j, i, text, ha="center", va="center", fontsize=7,
                    color="white" if value > threshold else "black",
                )
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
