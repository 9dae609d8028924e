"""Shared fixtures: synthetic color corpora, manifests and small checkpoints."""

import pathlib

import numpy as np
import pytest
import torch
from PIL import Image

from habclass.manifest import ingest_directory
from habclass.model import ClassifierConfig, build_classifier, save_checkpoint
from habclass.taxonomy import default_taxonomy

CORPUS_COLORS = {
    "AH": (220, 40, 40),
    "BOG": (40, 220, 40),
    "WAT": (40, 40, 220),
}


def solid_image(color, size=48, noise=12, rng=None):
    arr = np.full((size, size, 3), color, dtype=np.uint8)
    if noise and rng is not None:
        arr = np.clip(
            arr.astype(np.int16) + rng.integers(-noise, noise, arr.shape), 0, 255
        ).astype(np.uint8)
    return Image.fromarray(arr)


def write_color_corpus(root: pathlib.Path, colors=CORPUS_COLORS, per_class=12,
                       size=48, seed=7) -> pathlib.Path:
    rng = np.random.default_rng(seed)
    for abbr, color in colors.items():
        cdir = root / abbr
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            solid_image(color, size=size, rng=rng).save(cdir / f"img{i:02d}.png")
    return root


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return write_color_corpus(root)


@pytest.fixture(scope="session")
def corpus_manifest(corpus_dir, taxonomy):
    return ingest_directory(corpus_dir, taxonomy).manifest


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, taxonomy):
    """18-class tiny-backbone checkpoint with a non-degenerate head.

    The head starts zero-initialized, which would make every class equally
    probable; seeding it with small random weights gives distinct top-3
    orderings for service parity checks.
    """
    config = ClassifierConfig(
        n_classes=18, backbone="tiny", pretrained=False, input_size=32
    )
    torch.manual_seed(123)
    classifier = build_classifier(config)
    torch.nn.init.normal_(classifier.head.weight, std=0.05)
    torch.nn.init.normal_(classifier.head.bias, std=0.05)
    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    save_checkpoint(
        classifier, path, taxonomy=taxonomy, epoch=1, val_accuracy=0.5, tag="fixture"
    )
    return path
