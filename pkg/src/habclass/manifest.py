"""Image corpus index: records, manifests, and directory ingestion.

The on-disk corpus layout is one subdirectory per class abbreviation, each
holding image files. An optional sidecar CSV (keyed by path relative to the
corpus root) attaches site / location / capture-date metadata to records.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from PIL import Image, UnidentifiedImageError

from .errors import IngestError, ManifestError
from .taxonomy import ClassTaxonomy

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png"}

ORIGIN_ORIGINAL = "original"
ORIGIN_AUGMENTED = "augmented"


@dataclass(frozen=True)
class ImageRecord:
    """One labelled ground-level photograph (or a derived augmented copy).

    Augmented records reference their source image through ``parent_id`` and
    carry the seed that reproduces their transform; the image itself is never
    written to disk.
    """

    id: str
    path: str
    label: str
    site: str | None = None
    location: tuple[float, float] | None = None  # (lat, lon) decimal degrees
    capture_date: dt.date | None = None
    origin: Literal["original", "augmented"] = ORIGIN_ORIGINAL
    parent_id: str | None = None
    aug_seed: int | None = None

    def __post_init__(self):
        if self.origin == ORIGIN_AUGMENTED and not self.parent_id:
            raise ManifestError(f"augmented record {self.id!r} has no parent_id")
        if self.origin == ORIGIN_ORIGINAL and self.parent_id is not None:
            raise ManifestError(f"original record {self.id!r} must not set parent_id")

    def to_dict(self) -> dict:
        d = {"id": self.id, "path": self.path, "label": self.label, "origin": self.origin}
        if self.site is not None:
            d["site"] = self.site
        if self.location is not None:
            d["location"] = [self.location[0], self.location[1]]
        if self.capture_date is not None:
            d["capture_date"] = self.capture_date.isoformat()
        if self.parent_id is not None:
            d["parent_id"] = self.parent_id
        if self.aug_seed is not None:
            d["aug_seed"] = self.aug_seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        location = d.get("location")
        capture_date = d.get("capture_date")
        return cls(
            id=d["id"],
            path=d["path"],
            label=d["label"],
            site=d.get("site"),
            location=tuple(location) if location else None,
            capture_date=dt.date.fromisoformat(capture_date) if capture_date else None,
            origin=d.get("origin", ORIGIN_ORIGINAL),
            parent_id=d.get("parent_id"),
            aug_seed=d.get("aug_seed"),
        )


@dataclass(frozen=True)
class Manifest:
    """Immutable index of a labelled image corpus."""

    records: tuple[ImageRecord, ...]
    taxonomy_version: str
    per_class_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        recount = Counter(r.label for r in self.records)
        if not self.per_class_counts:
            object.__setattr__(self, "per_class_counts", dict(recount))
        elif dict(recount) != dict(self.per_class_counts):
            raise ManifestError(
                "per_class_counts disagrees with a recount of records: "
                f"stored={dict(self.per_class_counts)} recount={dict(recount)}"
            )
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = [i for i, n in Counter(ids).items() if n > 1]
            raise ManifestError(f"duplicate record ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def originals(self) -> list[ImageRecord]:
        return [r for r in self.records if r.origin == ORIGIN_ORIGINAL]

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.id: r for r in self.records}


@dataclass
class SkippedFile:
    path: str
    reason: str


@dataclass
class IngestResult:
    """A built manifest plus the skip report for unreadable files."""

    manifest: Manifest
    skipped: list[SkippedFile]


def _load_sidecar_metadata(path: Path) -> dict[str, dict]:
    """Read the optional per-image metadata CSV keyed by relative path.

    Columns: ``path`` (relative to corpus root, forward slashes), then any of
    ``site``, ``lat``, ``lon``, ``capture_date`` (ISO).
    """
    table: dict[str, dict] = {}
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "path" not in reader.fieldnames:
            raise IngestError(f"metadata file {path} needs a 'path' column")
        for row in reader:
            table[row["path"]] = row
    return table


def _record_metadata(meta_row: dict | None) -> dict:
    if not meta_row:
        return {}
    out: dict = {}
    if meta_row.get("site"):
        out["site"] = meta_row["site"]
    lat, lon = meta_row.get("lat"), meta_row.get("lon")
    if lat and lon:
        try:
            out["location"] = (float(lat), float(lon))
        except ValueError as e:
            raise IngestError(f"bad lat/lon in metadata row {meta_row}: {e}") from e
    if meta_row.get("capture_date"):
        try:
            out["capture_date"] = dt.date.fromisoformat(meta_row["capture_date"])
        except ValueError as e:
            raise IngestError(f"bad capture_date in metadata row {meta_row}: {e}") from e
    return out


def ingest_directory(
    root: str | Path,
    taxonomy: ClassTaxonomy,
    metadata: str | Path | None = None,
) -> IngestResult:
    """Scan a directory-per-class corpus into a manifest.

    Every decodable image under ``root/<abbreviation>/`` becomes an original
    record with id ``<abbreviation>/<filename>``. Corrupt or truncated files
    land in the skip report instead of the manifest.

    Raises:
        IngestError: if ``root`` is missing, contains subdirectories that are
            not taxonomy abbreviations, or yields zero images.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"corpus root {root} is not a directory")

    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    unknown = [d.name for d in class_dirs if d.name not in taxonomy]
    if unknown:
        raise IngestError(
            f"subdirectories not in taxonomy {taxonomy.version}: {sorted(unknown)}"
        )

    meta_table = _load_sidecar_metadata(Path(metadata)) if metadata else {}

    records: list[ImageRecord] = []
    skipped: list[SkippedFile] = []
    for class_dir in class_dirs:
        label = class_dir.name
        for file in sorted(class_dir.iterdir()):
            if not file.is_file() or file.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            rel = f"{label}/{file.name}"
            try:
                with Image.open(file) as im:
                    im.load()
            except (UnidentifiedImageError, OSError) as e:
                skipped.append(SkippedFile(path=str(file), reason=str(e)))
                continue
            records.append(
                ImageRecord(
                    id=rel,
                    path=str(file),
                    label=label,
                    **_record_metadata(meta_table.get(rel)),
                )
            )

    if not records:
        raise IngestError(f"no readable images found under {root}")
    manifest = Manifest(records=tuple(records), taxonomy_version=taxonomy.version)
    return IngestResult(manifest=manifest, skipped=skipped)


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    """Write a manifest as line-delimited JSON: a meta line, then one record per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        meta = {
            "manifest_version": 1,
            "taxonomy_version": manifest.taxonomy_version,
            "record_count": len(manifest),
        }
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for record in manifest.records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    records: list[ImageRecord] = []
    taxonomy_version = ""
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}: line {lineno} is not valid JSON: {e}") from e
            if lineno == 1 and "manifest_version" in payload:
                taxonomy_version = payload.get("taxonomy_version", "")
                continue
            try:
                records.append(ImageRecord.from_dict(payload))
            except KeyError as e:
                raise ManifestError(f"{path}: line {lineno} missing field {e}") from e
    return Manifest(records=tuple(records), taxonomy_version=taxonomy_version)


def write_skip_report(skipped: list[SkippedFile], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for s in skipped:
            f.write(json.dumps({"path": s.path, "reason": s.reason}) + "\n")
    return path
