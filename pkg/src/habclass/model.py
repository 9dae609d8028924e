"""Classifier built from a dilated segmentation-style backbone.

The backbone is the feature extractor of the DeepLabV3 family: a ResNet whose
last two stages use dilated convolutions (output stride 8), keeping
high-resolution, spatially aware features. The segmentation head is replaced by
a classification head: dropout on the feature maps, a 1x1 convolution to K
channels, global average pooling and flattening to image-level logits.

A ``tiny`` backbone with the same head runs the full pipeline at desk scale.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn
from torch.utils.checkpoint import checkpoint as _activation_checkpoint

from .errors import (
    CheckpointCompatibilityError,
    CheckpointError,
    ConfigError,
    ShapeError,
    WeightFetchError,
)
from .taxonomy import ClassTaxonomy

CHECKPOINT_FORMAT = "habclass-checkpoint"


@dataclass(frozen=True)
class ClassifierConfig:
    n_classes: int = 18
    dropout_rate: float = 0.5
    backbone: str = "deeplabv3_resnet101"
    pretrained: bool = True
    input_size: int = 224

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.backbone not in BACKBONE_CHANNELS:
            raise ConfigError(
                f"unknown backbone {self.backbone!r}; "
                f"available: {sorted(BACKBONE_CHANNELS)}"
            )


def _dilated_resnet_stages(arch: str, pretrained: bool) -> list[nn.Module]:
    """ResNet stages configured as in DeepLabV3: stride replaced by dilation
    in the last two stages, ImageNet weights when ``pretrained``."""
    import torchvision.models as tvm

    builders = {
        "deeplabv3_resnet101": (tvm.resnet101, tvm.ResNet101_Weights.IMAGENET1K_V1),
        "deeplabv3_resnet50": (tvm.resnet50, tvm.ResNet50_Weights.IMAGENET1K_V1),
    }
    builder, weights = builders[arch]
    try:
        net = builder(
            weights=weights if pretrained else None,
            replace_stride_with_dilation=[False, True, True],
        )
    except Exception as e:  # download failure surfaces as URLError/HTTPError/OSError
        raise WeightFetchError(
            f"could not fetch pretrained weights for {arch!r}: {e}. "
            "Retry with network access, pre-populate the torch hub cache, or "
            "build with pretrained=False."
        ) from e
    return [
        net.conv1, net.bn1, net.relu, net.maxpool,
        net.layer1, net.layer2, net.layer3, net.layer4,
    ]


def _tiny_stages() -> list[nn.Module]:
    """A three-block CPU-friendly feature extractor (output stride 8) whose
    last block uses dilation, mirroring the full backbone's layout."""
    def block(cin, cout, stride=1, dilation=1):
        return nn.Sequential(
            nn.Conv2d(cin, cout, 3, stride=stride, padding=dilation, dilation=dilation,
                      bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )

    return [
        block(3, 16, stride=2),
        nn.MaxPool2d(2),
        block(16, 32, stride=2),
        block(32, 64, dilation=2),
    ]


BACKBONE_CHANNELS = {
    "deeplabv3_resnet101": 2048,
    "deeplabv3_resnet50": 2048,
    "tiny": 64,
}


class HabitatClassifier(nn.Module):
    """Backbone feature maps -> dropout -> 1x1 conv to K -> global pool -> logits.

    The head conv is zero-initialised so training starts from uniform class
    probabilities and the early gradient signal is purely label-driven.
    """

    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.config = config
        if config.backbone == "tiny":
            stages = _tiny_stages()
        else:
            stages = _dilated_resnet_stages(config.backbone, config.pretrained)
        self.stages = nn.ModuleList(stages)
        self.dropout = nn.Dropout2d(config.dropout_rate)
        self.head = nn.Conv2d(BACKBONE_CHANNELS[config.backbone], config.n_classes, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.gradient_checkpointing = False

    def features(self, x: torch.Tensor) -> torch.Tensor:
        use_ckpt = (
            self.gradient_checkpointing and self.training and torch.is_grad_enabled()
        )
        for stage in self.stages:
            if use_ckpt and any(p.requires_grad for p in stage.parameters()):
                x = _activation_checkpoint(stage, x, use_reentrant=False)
            else:
                x = stage(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected a Bx3xHxW batch, got shape {tuple(x.shape)}")
        size = self.config.input_size
        if x.shape[2] != size or x.shape[3] != size:
            raise ShapeError(
                f"expected {size}x{size} inputs, got {x.shape[2]}x{x.shape[3]}"
            )
        feats = self.features(x)
        feats = self.dropout(feats)
        logits = self.pool(self.head(feats))
        return torch.flatten(logits, 1)


def build_classifier(config: ClassifierConfig | None = None) -> HabitatClassifier:
    """Construct the classifier for ``config`` (defaults match the full model)."""
    return HabitatClassifier(config or ClassifierConfig())


@torch.no_grad()
def predict_logits(classifier: HabitatClassifier, batch: torch.Tensor) -> torch.Tensor:
    """Eval-mode logits (dropout disabled, deterministic)."""
    was_training = classifier.training
    classifier.eval()
    try:
        return classifier(batch)
    finally:
        if was_training:
            classifier.train()


@dataclass
class Checkpoint:
    """A loaded classifier plus the metadata saved alongside its weights."""

    classifier: HabitatClassifier
    config: ClassifierConfig
    taxonomy_version: str
    class_abbreviations: tuple[str, ...]
    epoch: int
    val_accuracy: float
    tag: str | None = None

    @property
    def model_version(self) -> str:
        base = f"{self.config.backbone}@epoch{self.epoch}"
        return f"{self.tag}:{base}" if self.tag else base


def save_checkpoint(
    classifier: HabitatClassifier,
    path: str | Path,
    *,
    taxonomy: ClassTaxonomy,
    epoch: int,
    val_accuracy: float,
    tag: str | None = None,
) -> Path:
    """Serialize weights plus config, taxonomy identity and training metadata."""
    config = classifier.config
    if config.n_classes != len(taxonomy):
        raise CheckpointCompatibilityError(
            f"classifier has {config.n_classes} classes but taxonomy "
            f"{taxonomy.version} has {len(taxonomy)}"
        )
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "format_version": 1,
        "config": asdict(config),
        "state_dict": classifier.state_dict(),
        "taxonomy_version": taxonomy.version,
        "class_abbreviations": list(taxonomy.abbreviations),
        "epoch": int(epoch),
        "val_accuracy": float(val_accuracy),
        "tag": tag,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(
    path: str | Path,
    taxonomy: ClassTaxonomy | None = None,
    map_location: str = "cpu",
) -> Checkpoint:
    """Load a checkpoint; optionally verify it against the active taxonomy.

    Raises:
        CheckpointError: if the file cannot be read or is not a checkpoint.
        CheckpointCompatibilityError: if ``taxonomy`` is given and its class
            set does not match the checkpoint's.
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location=map_location, weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a recognized checkpoint file")

    config = ClassifierConfig(**payload["config"])
    abbreviations = tuple(payload["class_abbreviations"])
    if config.n_classes != len(abbreviations):
        raise CheckpointError(
            f"{path}: config says {config.n_classes} classes but "
            f"{len(abbreviations)} abbreviations are recorded"
        )
    if taxonomy is not None and tuple(taxonomy.abbreviations) != abbreviations:
        raise CheckpointCompatibilityError(
            f"checkpoint classes {list(abbreviations)} do not match taxonomy "
            f"{taxonomy.version} classes {list(taxonomy.abbreviations)}"
        )

    # Weights come from the checkpoint, so never trigger a pretrained fetch.
    build_config = ClassifierConfig(**{**asdict(config), "pretrained": False})
    classifier = HabitatClassifier(build_config)
    classifier.load_state_dict(payload["state_dict"])
    classifier.eval()
    return Checkpoint(
        classifier=classifier,
        config=config,
        taxonomy_version=payload["taxonomy_version"],
        class_abbreviations=abbreviations,
        epoch=payload["epoch"],
        val_accuracy=payload["val_accuracy"],
        tag=payload.get("tag"),
    )
