"""Per-class balancing of the training set.

Every class is brought to exactly ``target_per_class`` records: overrepresented
classes are randomly subsampled without replacement, underrepresented classes
keep all originals and gain augmented records whose parents cycle round-robin
over the originals. Augmented records are materialised lazily at load time from
their stored seed, so nothing extra is written to disk.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import BalanceError, ConfigError
from .manifest import ImageRecord, ORIGIN_AUGMENTED, ORIGIN_ORIGINAL
from .rng import derive_seed


@dataclass(frozen=True)
class BalanceConfig:
    target_per_class: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.target_per_class < 1:
            raise ConfigError(
                f"target_per_class must be >= 1, got {self.target_per_class}"
            )


def balance_class_counts(
    train_records: list[ImageRecord],
    config: BalanceConfig,
    classes: list[str] | None = None,
) -> list[ImageRecord]:
    """Return a training set with exactly ``target_per_class`` records per class.

    ``classes`` fixes the set of classes that must be present (normally the
    taxonomy's abbreviations); it defaults to the classes observed in
    ``train_records``. Deterministic given ``config.seed``, independent of
    input record order.

    Raises:
        BalanceError: if the class list is empty, a requested class has no
            records, or an augmented record is passed as input.
    """
    for record in train_records:
        if record.origin != ORIGIN_ORIGINAL:
            raise BalanceError(
                f"balancing input must contain only original records; "
                f"got augmented record {record.id!r}"
            )

    by_class: dict[str, list[ImageRecord]] = {}
    for record in train_records:
        by_class.setdefault(record.label, []).append(record)

    class_list = sorted(classes) if classes is not None else sorted(by_class)
    if not class_list:
        raise BalanceError("no classes to balance")

    target = config.target_per_class
    balanced: list[ImageRecord] = []
    for label in class_list:
        originals = sorted(by_class.get(label, []), key=lambda r: r.id)
        n = len(originals)
        if n == 0:
            raise BalanceError(f"class {label!r} has 0 training records")

        rng = random.Random(derive_seed(config.seed, "balance", label))
        if n > target:
            keep = sorted(rng.sample(range(n), target))
            balanced.extend(originals[i] for i in keep)
        elif n == target:
            balanced.extend(originals)
        else:
            balanced.extend(originals)
            parents = list(originals)
            rng.shuffle(parents)
            for k in range(target - n):
                parent = parents[k % n]
                cycle = k // n
                balanced.append(
                    replace(
                        parent,
                        id=f"{parent.id}@aug{cycle}",
                        origin=ORIGIN_AUGMENTED,
                        parent_id=parent.id,
                        aug_seed=derive_seed(config.seed, "augment", label, k),
                    )
                )
    return balanced


def save_balanced_records(records: list[ImageRecord], path: str | Path) -> Path:
    """Persist the balanced-set description: id, origin, parent, seed per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for r in records:
            row = {"id": r.id, "origin": r.origin}
            if r.parent_id is not None:
                row["parent_id"] = r.parent_id
            if r.aug_seed is not None:
                row["aug_seed"] = r.aug_seed
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return path
