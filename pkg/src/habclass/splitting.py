"""Stratified k-fold assignment over original records.

Folds are stratified per class so every fold carries every class, which the
per-fold per-class metrics require. Only original records receive folds;
augmented records are derived per fold at balancing time and must never leak
across the split.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import SplitError
from .manifest import Manifest, ORIGIN_ORIGINAL
from .rng import derive_seed


@dataclass(frozen=True)
class FoldAssignment:
    """Mapping of original record ids to fold indices 0..n_folds-1."""

    n_folds: int
    assignment: dict[str, int]
    seed: int

    def _check_index(self, fold_index: int) -> None:
        if not 0 <= fold_index < self.n_folds:
            raise SplitError(
                f"fold index {fold_index} out of range 0..{self.n_folds - 1}"
            )

    def validation_ids(self, fold_index: int) -> list[str]:
        self._check_index(fold_index)
        return sorted(i for i, f in self.assignment.items() if f == fold_index)

    def training_ids(self, fold_index: int) -> list[str]:
        self._check_index(fold_index)
        return sorted(i for i, f in self.assignment.items() if f != fold_index)


def stratified_kfold_split(manifest: Manifest, n_folds: int, seed: int) -> FoldAssignment:
    """Assign each original record to one of ``n_folds`` folds, stratified per class.

    Within every class the fold sizes differ by at most one. Deterministic
    given ``seed`` and the manifest contents (record order does not matter).

    Raises:
        SplitError: if ``n_folds < 2`` or any class has fewer original records
            than ``n_folds``.
    """
    if n_folds < 2:
        raise SplitError(f"n_folds must be at least 2, got {n_folds}")

    by_class: dict[str, list[str]] = {}
    for record in manifest.records:
        if record.origin != ORIGIN_ORIGINAL:
            continue
        by_class.setdefault(record.label, []).append(record.id)

    if not by_class:
        raise SplitError("manifest has no original records to split")

    assignment: dict[str, int] = {}
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) < n_folds:
            raise SplitError(
                f"class {label!r} has {len(ids)} original images, fewer than "
                f"n_folds={n_folds}"
            )
        rng = random.Random(derive_seed(seed, "fold", label))
        rng.shuffle(ids)
        # Rotate the fold that takes the remainder so small classes do not all
        # overload fold 0.
        offset = rng.randrange(n_folds)
        for i, record_id in enumerate(ids):
            assignment[record_id] = (i + offset) % n_folds

    return FoldAssignment(n_folds=n_folds, assignment=assignment, seed=seed)


def save_fold_assignment(folds: FoldAssignment, path: str | Path) -> Path:
    """Write a fold assignment as JSON; byte-identical for identical inputs."""
    path = Path(path)
    payload = {
        "n_folds": folds.n_folds,
        "seed": folds.seed,
        "assignment": folds.assignment,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_fold_assignment(path: str | Path) -> FoldAssignment:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return FoldAssignment(
            n_folds=int(payload["n_folds"]),
            assignment={str(k): int(v) for k, v in payload["assignment"].items()},
            seed=int(payload["seed"]),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise SplitError(f"cannot load fold assignment from {path}: {e}") from e
