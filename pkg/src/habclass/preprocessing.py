"""Image transform pipelines for training and evaluation.

Evaluation images are only resized and normalised. Training images get random
horizontal flips, bounded rotation, colour jitter and (optionally) a sub-policy
from the published ImageNet AutoAugment table before the same resize and
normalisation. Every stochastic draw is a pure function of an integer seed, so
transforms are reproducible and safe to run in parallel worker pools.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np
import torch
import torchvision.transforms.functional as TF
from PIL import Image
from torchvision.transforms import AutoAugment, AutoAugmentPolicy, InterpolationMode

from .errors import ConfigError, PreprocessError
from .rng import derive_seed

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessConfig:
    """Resize + channel normalisation applied to every image."""

    target_size: int = 224
    channel_means: tuple[float, float, float] = IMAGENET_MEAN
    channel_stds: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.target_size < 32:
            raise ConfigError(f"target_size must be >= 32, got {self.target_size}")
        if len(self.channel_means) != 3 or len(self.channel_stds) != 3:
            raise ConfigError("channel_means and channel_stds must each have 3 values")
        if any(s <= 0 for s in self.channel_stds):
            raise ConfigError(f"channel stds must be positive, got {self.channel_stds}")


@dataclass(frozen=True)
class AugmentConfig:
    """Stochastic training-time transforms; magnitudes of zero disable an op."""

    horizontal_flip_prob: float = 0.5
    rotation_degrees: float = 15.0
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.05
    use_autoaugment_policy: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ConfigError("horizontal_flip_prob must be in [0, 1]")
        if not 0.0 <= self.rotation_degrees <= 180.0:
            raise ConfigError("rotation_degrees must be in [0, 180]")
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} magnitude must be >= 0")
        if not 0.0 <= self.hue <= 0.5:
            raise ConfigError("hue magnitude must be in [0, 0.5]")


def _as_rgb_image(image) -> Image.Image:
    """Accept a PIL RGB image or an HxWx3 uint8 array; reject anything else."""
    if isinstance(image, Image.Image):
        if image.mode != "RGB":
            raise PreprocessError(f"expected an RGB image, got mode {image.mode!r}")
        if image.width < 1 or image.height < 1:
            raise PreprocessError("image has no pixels")
        return image
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise PreprocessError(f"expected an HxWx3 array, got shape {arr.shape}")
    if arr.size == 0:
        raise PreprocessError("image has no pixels")
    if arr.dtype != np.uint8:
        raise PreprocessError(f"expected 8-bit channel values, got dtype {arr.dtype}")
    return Image.fromarray(arr, mode="RGB")


def _resize_normalize(img: Image.Image, config: PreprocessConfig) -> torch.Tensor:
    img = TF.resize(
        img,
        [config.target_size, config.target_size],
        interpolation=InterpolationMode.BILINEAR,
    )
    t = TF.pil_to_tensor(img).to(torch.float32) / 255.0
    mean = torch.tensor(config.channel_means, dtype=torch.float32).view(3, 1, 1)
    std = torch.tensor(config.channel_stds, dtype=torch.float32).view(3, 1, 1)
    return (t - mean) / std


def denormalize(tensor: torch.Tensor, config: PreprocessConfig | None = None) -> torch.Tensor:
    """Invert the channel normalisation, recovering the resized image in [0, 1]."""
    config = config or PreprocessConfig()
    mean = torch.tensor(config.channel_means, dtype=tensor.dtype).view(3, 1, 1)
    std = torch.tensor(config.channel_stds, dtype=tensor.dtype).view(3, 1, 1)
    return tensor * std + mean


def preprocess_eval(image, config: PreprocessConfig | None = None) -> torch.Tensor:
    """Deterministic eval transform: resize to target, scale to [0,1], normalise.

    Output channel c is ``(resized[c]/255 - mean[c]) / std[c]`` as a
    ``3 x target x target`` float32 tensor.
    """
    config = config or PreprocessConfig()
    return _resize_normalize(_as_rgb_image(image), config)


def _rotate_with_reflection(img: Image.Image, angle: float) -> Image.Image:
    """Rotate in place, filling exposed corners by edge reflection.

    Implemented as reflect-pad, rotate, centre-crop. The pad width is the
    circumscribed-circle bound, sufficient for any angle; it is capped at
    dimension-1 (a PIL reflection limit), which only matters for extreme
    aspect ratios combined with large angles.
    """
    w, h = img.size
    pad = math.ceil((math.hypot(w, h) - min(w, h)) / 2) + 2
    pad = min(pad, w - 1, h - 1)
    if pad > 0:
        img = TF.pad(img, [pad, pad], padding_mode="reflect")
    img = TF.rotate(img, angle, interpolation=InterpolationMode.BILINEAR)
    return TF.center_crop(img, [h, w])


def _color_jitter(img: Image.Image, aug: AugmentConfig, rng: random.Random) -> Image.Image:
    ops = []
    if aug.brightness > 0:
        factor = rng.uniform(max(0.0, 1.0 - aug.brightness), 1.0 + aug.brightness)
        ops.append(lambda im: TF.adjust_brightness(im, factor))
    if aug.contrast > 0:
        factor = rng.uniform(max(0.0, 1.0 - aug.contrast), 1.0 + aug.contrast)
        ops.append(lambda im: TF.adjust_contrast(im, factor))
    if aug.saturation > 0:
        factor = rng.uniform(max(0.0, 1.0 - aug.saturation), 1.0 + aug.saturation)
        ops.append(lambda im: TF.adjust_saturation(im, factor))
    if aug.hue > 0:
        shift = rng.uniform(-aug.hue, aug.hue)
        ops.append(lambda im: TF.adjust_hue(im, shift))
    rng.shuffle(ops)
    for op in ops:
        img = op(img)
    return img


def _apply_autoaugment(img: Image.Image, seed: int) -> Image.Image:
    # AutoAugment draws from the global torch RNG; fork it so the call is a
    # pure function of the seed and leaves no trace on callers.
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return AutoAugment(policy=AutoAugmentPolicy.IMAGENET)(img)


def preprocess_train(
    image,
    config: PreprocessConfig | None = None,
    aug: AugmentConfig | None = None,
    seed: int = 0,
) -> torch.Tensor:
    """Stochastic training transform, fully determined by ``seed``.

    Order: horizontal flip, rotation within +/-rotation_degrees (edge-reflection
    fill), colour jitter, AutoAugment sub-policy (if enabled), then the shared
    resize + normalisation. With all magnitudes zero, flip probability zero and
    AutoAugment off, the output is identical to :func:`preprocess_eval`.
    """
    config = config or PreprocessConfig()
    aug = aug or AugmentConfig()
    img = _as_rgb_image(image)
    rng = random.Random(seed)

    if aug.horizontal_flip_prob > 0 and rng.random() < aug.horizontal_flip_prob:
        img = TF.hflip(img)
    if aug.rotation_degrees > 0:
        angle = rng.uniform(-aug.rotation_degrees, aug.rotation_degrees)
        img = _rotate_with_reflection(img, angle)
    img = _color_jitter(img, aug, rng)
    if aug.use_autoaugment_policy:
        img = _apply_autoaugment(img, derive_seed(seed, "autoaugment"))
    return _resize_normalize(img, config)
