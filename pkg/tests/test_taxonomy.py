"""Class taxonomy: canonical ordering, lookups, serialization."""

import json

import pytest

from habclass.errors import TaxonomyError
from habclass.taxonomy import (
    LIVING_ENGLAND_IMAGE_COUNTS,
    MAX_CLASSES,
    ClassTaxonomy,
    default_taxonomy,
    load_taxonomy,
    save_taxonomy,
)

EXPECTED_ORDER = [
    "AH", "BMYW", "BOG", "BRA", "BS", "BSSP", "BUAG", "CS", "CSD",
    "CW", "DSH", "FMS", "IG", "IR", "Multiple", "SCR", "UG", "WAT",
]


def test_default_has_18_classes(taxonomy):
    assert len(taxonomy) == 18


def test_canonical_order_is_alphabetical_by_abbreviation(taxonomy):
    assert list(taxonomy.abbreviations) == EXPECTED_ORDER
    assert list(taxonomy.abbreviations) == sorted(taxonomy.abbreviations)


def test_indices_match_position(taxonomy):
    for i, cls in enumerate(taxonomy):
        assert cls.index == i
        assert taxonomy.index_of(cls.abbreviation) == i


def test_every_class_has_name_and_definition(taxonomy):
    for cls in taxonomy:
        assert cls.name.strip()
        assert cls.definition.strip()


def test_reference_image_counts_total():
    assert sum(LIVING_ENGLAND_IMAGE_COUNTS.values()) == 43092
    assert set(LIVING_ENGLAND_IMAGE_COUNTS) == set(EXPECTED_ORDER)


def test_membership_and_get(taxonomy):
    assert "BOG" in taxonomy
    assert "XYZ" not in taxonomy
    assert taxonomy.get("WAT").abbreviation == "WAT"
    with pytest.raises(TaxonomyError):
        taxonomy.get("XYZ")
    with pytest.raises(TaxonomyError):
        taxonomy.index_of("XYZ")


def test_from_entries_sorts_by_abbreviation():
    tax = ClassTaxonomy.from_entries(
        [("Water", "WAT", "w"), ("Bog", "BOG", "b")], "v-test"
    )
    assert tax.abbreviations == ("BOG", "WAT")
    assert tax.version == "v-test"


def test_duplicate_abbreviation_rejected():
    with pytest.raises(TaxonomyError):
        ClassTaxonomy.from_entries(
            [("Water", "WAT", "w"), ("Water2", "WAT", "w2")], "v"
        )


def test_empty_rejected():
    with pytest.raises(TaxonomyError):
        ClassTaxonomy.from_entries([], "v")


def test_class_limit_enforced():
    entries = [(f"c{i}", f"C{i:04d}", "d") for i in range(MAX_CLASSES + 1)]
    with pytest.raises(TaxonomyError):
        ClassTaxonomy.from_entries(entries, "v")


def test_json_round_trip(tmp_path, taxonomy):
    path = tmp_path / "tax.json"
    save_taxonomy(taxonomy, path)
    loaded = load_taxonomy(path)
    assert loaded == taxonomy


def test_load_default_when_source_none():
    assert load_taxonomy(None) == default_taxonomy()


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"version": "v"}), encoding="utf-8")
    with pytest.raises(TaxonomyError):
        load_taxonomy(path)
