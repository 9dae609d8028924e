"""Habitat class taxonomy: the label space for classification.

The default taxonomy is the 18-class Living England habitat scheme (17
single-habitat classes plus ``Multiple`` for mixed scenes). Classes are kept in
a fixed canonical order, alphabetical by abbreviation, so class indices, logits
and confusion matrices are reproducible across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import TaxonomyError

MAX_CLASSES = 1000

#: (name, abbreviation, definition) for the Living England habitat scheme.
LIVING_ENGLAND_CLASSES = [
    ("Arable and Horticultural", "AH",
     "Cropped or recently tilled farmland, including cereal and vegetable fields, orchards and horticultural plots."),
    ("Bare Sand", "BS",
     "Unvegetated sand surfaces such as beaches, dune blowouts and inland sand workings."),
    ("Bare Soil, Silt and Peat", "BSSP",
     "Exposed soil, silt or peat with little or no vegetation cover."),
    ("Bog", "BOG",
     "Waterlogged peatland fed mainly by rainfall, typically carpeted with sphagnum mosses."),
    ("Bracken", "BRA",
     "Ground dominated by dense stands of bracken fern, usually on hillsides or woodland margins."),
    ("Broadleaved, Mixed and Yew Woodland", "BMYW",
     "Woodland dominated by broadleaved trees, or mixed stands with conifers or yew."),
    ("Built up areas and Gardens", "BUAG",
     "Urban and suburban land including buildings, roads, amenity space and domestic gardens."),
    ("Coastal Saltmarsh", "CS",
     "Intertidal flats of salt-tolerant vegetation along sheltered coasts and estuaries."),
    ("Coastal Sand Dunes", "CSD",
     "Wind-blown sand ridges along the coast, from mobile foredunes to vegetated fixed dunes."),
    ("Coniferous Woodland", "CW",
     "Woodland dominated by conifer species, commonly plantation forestry."),
    ("Dwarf Shrub Heath", "DSH",
     "Heathland dominated by low woody shrubs such as heather and bilberry."),
    ("Fen, marsh and swamp", "FMS",
     "Wetland on mineral or peat soils fed by ground or surface water, with rushes, sedges or reeds."),
    ("Improved and Semi-Improved Grassland", "IG",
     "Agriculturally improved or reseeded grassland, typically species-poor and heavily grazed or mown."),
    ("Inland rock", "IR",
     "Natural and artificial exposed rock away from the coast, including cliffs, screes and quarries."),
    ("Multiple", "Multiple",
     "Scenes showing a mixture of habitat types with no single dominant class, such as transitional edges."),
    ("Scrub", "SCR",
     "Vegetation dominated by bushes and young trees, such as hawthorn, blackthorn or gorse thickets."),
    ("Unimproved grassland", "UG",
     "Species-rich grassland with little agricultural improvement, including hay meadows and downland."),
    ("Water", "WAT",
     "Open fresh or brackish water bodies such as lakes, ponds, rivers and canals."),
]

#: Published per-class photo counts of the Living England ground-level corpus.
#: Used as a realistic class-imbalance profile in tests and demos; the corpus
#: itself is not distributed with this package.
LIVING_ENGLAND_IMAGE_COUNTS = {
    "AH": 2359, "BS": 957, "BSSP": 224, "BOG": 1750, "BRA": 2567,
    "BMYW": 3187, "BUAG": 754, "CS": 1008, "CSD": 1546, "CW": 371,
    "DSH": 4699, "FMS": 2044, "IG": 10555, "IR": 794, "Multiple": 1593,
    "SCR": 2053, "UG": 6172, "WAT": 459,
}

DEFAULT_TAXONOMY_VERSION = "living-england-18.v1"


@dataclass(frozen=True)
class HabitatClass:
    """One habitat class: full name, short code, definition, canonical index."""

    name: str
    abbreviation: str
    definition: str
    index: int


@dataclass(frozen=True)
class ClassTaxonomy:
    """An ordered, validated set of habitat classes.

    Classes are sorted alphabetically by abbreviation at construction and
    indexed 0..K-1 in that order; the ordering is part of the taxonomy's
    contract and never changes after construction.
    """

    classes: tuple[HabitatClass, ...]
    version: str

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def __contains__(self, abbreviation: str) -> bool:
        return abbreviation in self._by_abbreviation

    @cached_property
    def abbreviations(self) -> tuple[str, ...]:
        return tuple(c.abbreviation for c in self.classes)

    @cached_property
    def _by_abbreviation(self) -> dict[str, HabitatClass]:
        return {c.abbreviation: c for c in self.classes}

    def get(self, abbreviation: str) -> HabitatClass:
        try:
            return self._by_abbreviation[abbreviation]
        except KeyError:
            raise TaxonomyError(
                f"unknown class abbreviation {abbreviation!r} "
                f"(taxonomy {self.version})"
            ) from None

    def index_of(self, abbreviation: str) -> int:
        return self.get(abbreviation).index

    @classmethod
    def from_entries(cls, entries, version: str) -> "ClassTaxonomy":
        """Build a taxonomy from ``(name, abbreviation, definition)`` triples.

        Raises:
            TaxonomyError: on an empty class list, more than ``MAX_CLASSES``
                entries, or a duplicate abbreviation.
        """
        entries = list(entries)
        if not entries:
            raise TaxonomyError("taxonomy has an empty class list")
        if len(entries) > MAX_CLASSES:
            raise TaxonomyError(
                f"taxonomy has {len(entries)} classes; at most {MAX_CLASSES} supported"
            )
        seen = set()
        for _, abbr, _ in entries:
            if not abbr:
                raise TaxonomyError("class abbreviation must be non-empty")
            if abbr in seen:
                raise TaxonomyError(f"duplicate class abbreviation {abbr!r}")
            seen.add(abbr)
        ordered = sorted(entries, key=lambda e: e[1])
        classes = tuple(
            HabitatClass(name=name, abbreviation=abbr, definition=definition, index=i)
            for i, (name, abbr, definition) in enumerate(ordered)
        )
        return cls(classes=classes, version=version)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "classes": [
                {"name": c.name, "abbreviation": c.abbreviation, "definition": c.definition}
                for c in self.classes
            ],
        }


def default_taxonomy() -> ClassTaxonomy:
    """The embedded 18-class Living England taxonomy."""
    return ClassTaxonomy.from_entries(LIVING_ENGLAND_CLASSES, DEFAULT_TAXONOMY_VERSION)


def load_taxonomy(source: str | Path | None = None) -> ClassTaxonomy:
    """Load a taxonomy from a JSON definition file.

    The file holds ``{"version": ..., "classes": [{"name", "abbreviation",
    "definition"}, ...]}``. With ``source=None`` the embedded default taxonomy
    is returned.
    """
    if source is None:
        return default_taxonomy()
    path = Path(source)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise TaxonomyError(f"cannot read taxonomy file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise TaxonomyError(f"taxonomy file {path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict) or "classes" not in payload:
        raise TaxonomyError(f"taxonomy file {path} lacks a 'classes' list")
    entries = []
    for i, item in enumerate(payload["classes"]):
        try:
            entries.append((item["name"], item["abbreviation"], item.get("definition", "")))
        except (TypeError, KeyError) as e:
            raise TaxonomyError(
                f"taxonomy file {path}, class entry {i}: missing field {e}"
            ) from e
    version = payload.get("version") or f"custom-{len(entries)}"
    return ClassTaxonomy.from_entries(entries, version)


def save_taxonomy(taxonomy: ClassTaxonomy, path: str | Path) -> Path:
    """Write a taxonomy definition file readable by :func:`load_taxonomy`."""
    path = Path(path)
    path.write_text(json.dumps(taxonomy.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path
