"""Image preprocessing for the pretrained backbones.

The pipeline is the published recipe of the torchvision ImageNet models:
resize the shorter side, center crop, scale to [0, 1], normalize with the
ImageNet channel statistics.  Whatever values are in effect are frozen into
each run's manifest so a feature file is always reproducible.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class Preprocessing:
    resize: int = 256
    crop: int = 224
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD

    def describe(self) -> dict:
        return asdict(self)

    def __call__(self, image: Image.Image) -> torch.Tensor:
        image = image.convert("RGB")
        w, h = image.size
        scale = self.resize / min(w, h)
        image = image.resize(
            (max(self.crop, round(w * scale)), max(self.crop, round(h * scale))),
            Image.BILINEAR,
        )
        w, h = image.size
        left = (w - self.crop) // 2
        top = (h - self.crop) // 2
        image = image.crop((left, top, left + self.crop, top + self.crop))
        arr = np.asarray(image, dtype=np.float32) / 255.0
        arr = (arr - np.asarray(self.mean, dtype=np.float32)) / np.asarray(
            self.std, dtype=np.float32
        )
        return torch.from_numpy(arr.transpose(2, 0, 1))


def list_images(image_dir) -> list[Path]:
    """Image files under a directory, ordered by name for stable output."""
    root = Path(image_dir)
    if not root.is_dir():
        raise NotADirectoryError(f"image directory not found: {root}")
    return sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )


def load_images(paths, preprocessing: Preprocessing):
    """Decode and preprocess images; undecodable files are collected, not fatal.

    Returns (ids, batch tensor, skipped names).
    """
    ids = []
    tensors = []
    skipped = []
    for path in paths:
        try:
            with Image.open(path) as img:
                tensors.append(preprocessing(img))
        except (UnidentifiedImageError, OSError):
            skipped.append(path.name)
            continue
        ids.append(path.stem)
    batch = torch.stack(tensors) if tensors else torch.empty(0, 3, 1, 1)
    return ids, batch, skipped
