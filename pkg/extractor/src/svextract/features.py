"""Frozen feature extraction: one pooled backbone vector per image."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .backbones import build_feature_extractor, spec_for, state_checksum
from .fileio import write_feature_file, write_manifest
from .preprocess import Preprocessing, list_images, load_images


def extract_features(
    image_dir,
    backbone: str,
    out_dir,
    pretrained: bool = False,
    weights_path: str | None = None,
    seed: int = 0,
    batch_size: int = 16,
    preprocessing: Preprocessing | None = None,
) -> dict:
    """Run the backbone in evaluation mode over a directory of images.

    Writes ``features_<backbone>.csv`` in the pipeline's feature-file format
    plus a manifest JSON recording the weights, the frozen preprocessing and
    any skipped (undecodable) files.  Extraction is pure inference; the
    parameter checksum is verified unchanged and recorded.
    """
    preprocessing = preprocessing or Preprocessing()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extractor, d_feat, weights_desc = build_feature_extractor(
        backbone, pretrained=pretrained, weights_path=weights_path, seed=seed
    )
    checksum_before = state_checksum(extractor)

    paths = list_images(image_dir)
    ids: list[str] = []
    skipped: list[str] = []
    chunks = []
    with torch.no_grad():
        for start in range(0, len(paths), batch_size):
            batch_ids, batch, batch_skipped = load_images(
                paths[start : start + batch_size], preprocessing
            )
            skipped.extend(batch_skipped)
            if not batch_ids:
                continue
            chunks.append(extractor(batch).cpu().numpy().astype(np.float64))
            ids.extend(batch_ids)

    matrix = np.vstack(chunks) if chunks else np.empty((0, d_feat))
    if matrix.shape[1] != d_feat:
        raise RuntimeError(
            f"backbone produced width {matrix.shape[1]}, expected {d_feat}"
        )
    checksum_after = state_checksum(extractor)
    if checksum_after != checksum_before:
        raise RuntimeError("feature extraction modified backbone parameters")

    feature_path = out / f"features_{backbone}.csv"
    write_feature_file(feature_path, ids, matrix)
    manifest = {
        "task": "features",
        "backbone": backbone,
        "d_feat": d_feat,
        "weights": weights_desc,
        "weights_checksum": checksum_after,
        "preprocessing": preprocessing.describe(),
        "images": len(ids),
        "skipped": sorted(skipped),
        "output": feature_path.name,
    }
    write_manifest(out / f"manifest_features_{backbone}.json", manifest)
    return manifest


def backbone_width(backbone: str) -> int:
    return spec_for(backbone).d_feat
