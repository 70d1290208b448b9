"""Writers for the ratemaking pipeline's documented file formats."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def write_feature_file(path, ids, matrix) -> None:
    """``id,f0..f{d-1}`` rows, one per image."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{j}" for j in range(matrix.shape[1])])
        for pid, row in zip(ids, matrix):
            writer.writerow([pid] + [f"{v:.12g}" for v in row])


def write_embedding_file(
    path, ids, matrix, backbone: str, seed: int, approach: str = "fine-tuned"
) -> None:
    """``id,g0..`` rows preceded by the provenance comment line."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# approach={approach} backbone={backbone} "
            f"embedding_size={matrix.shape[1]} seed={seed} decorrelated=false\n"
        )
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"g{j}" for j in range(matrix.shape[1])])
        for pid, row in zip(ids, matrix):
            writer.writerow([pid] + [f"{v:.17g}" for v in row])


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
