"""Semantic segmentation of facade images into per-pixel category masks.

Masks are single-channel 8-bit PNGs whose values are 1-based labels into the
shipped scene vocabulary (a model output channel c maps to label c + 1), at
the image's native resolution so each mask aligns pixel-for-pixel with its
image.  The default architecture is a dilated-ResNet50 segmentation head
over the 150 scene categories; point ``weights_path`` at a trained state
dict for meaningful masks (training segmentation models is out of scope
here), or run with seeded random weights for format/shape smoke checks.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torchvision.models.segmentation import deeplabv3_resnet50

from .backbones import state_checksum
from .fileio import write_manifest
from .preprocess import IMAGENET_MEAN, IMAGENET_STD, list_images
from .vocabulary import SCENE_CATEGORIES, write_vocabulary

N_CATEGORIES = len(SCENE_CATEGORIES)

_MIN_SIDE = 32  # the dilated backbone needs a minimum spatial extent


def build_segmenter(weights_path: str | None = None, seed: int = 0):
    if weights_path is not None:
        path = Path(weights_path)
        if not path.exists():
            raise FileNotFoundError(f"weights file not found: {path}")
        model = deeplabv3_resnet50(
            weights=None, weights_backbone=None, num_classes=N_CATEGORIES
        )
        model.load_state_dict(torch.load(path, map_location="cpu"))
        desc = f"file:{path}"
    else:
        torch.manual_seed(seed)
        model = deeplabv3_resnet50(
            weights=None, weights_backbone=None, num_classes=N_CATEGORIES
        )
        desc = f"random-init:seed={seed}"
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model, desc


def _normalize(image: Image.Image) -> torch.Tensor:
    arr = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(
        IMAGENET_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1))[None]


def segment_images(
    image_dir,
    out_dir,
    weights_path: str | None = None,
    seed: int = 0,
    max_side: int | None = None,
) -> dict:
    """Write one label PNG per image plus the category vocabulary file.

    Images run one at a time at native resolution (optionally bounded by
    ``max_side`` for very large inputs, in which case logits are upsampled
    back), so every mask has exactly its image's spatial shape.
    """
    out = Path(out_dir)
    masks_dir = out / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    model, weights_desc = build_segmenter(weights_path=weights_path, seed=seed)
    paths = list_images(image_dir)
    skipped: list[str] = []
    written: list[str] = []
    with torch.no_grad():
        for path in paths:
            try:
                with Image.open(path) as img:
                    img = img.convert("RGB")
                    w, h = img.size
                    if min(w, h) < _MIN_SIDE:
                        scale = _MIN_SIDE / min(w, h)
                        img = img.resize(
                            (max(_MIN_SIDE, round(w * scale)),
                             max(_MIN_SIDE, round(h * scale))),
                            Image.BILINEAR,
                        )
                    elif max_side is not None and max(w, h) > max_side:
                        scale = max_side / max(w, h)
                        img = img.resize(
                            (max(_MIN_SIDE, round(w * scale)),
                             max(_MIN_SIDE, round(h * scale))),
                            Image.BILINEAR,
                        )
                    batch = _normalize(img)
            except (UnidentifiedImageError, OSError):
                skipped.append(path.name)
                continue
            logits = model(batch)["out"]
            if logits.shape[-2:] != (h, w):
                logits = torch.nn.functional.interpolate(
                    logits, size=(h, w), mode="bilinear", align_corners=False
                )
            mask = logits.argmax(dim=1)[0].cpu().numpy().astype(np.uint8) + 1
            mask_path = masks_dir / f"{path.stem}.png"
            Image.fromarray(mask, mode="L").save(mask_path, format="PNG")
            written.append(mask_path.name)

    vocabulary_path = out / "vocabulary.csv"
    write_vocabulary(vocabulary_path)
    manifest = {
        "task": "segment",
        "categories": N_CATEGORIES,
        "weights": weights_desc,
        "weights_checksum": state_checksum(model),
        "max_side": max_side,
        "masks": len(written),
        "skipped": sorted(skipped),
        "vocabulary": vocabulary_path.name,
    }
    write_manifest(out / "manifest_segment.json", manifest)
    return manifest
