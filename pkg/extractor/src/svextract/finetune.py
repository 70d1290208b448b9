"""The complete approach: fine-tune a backbone on the related tasks and
export the last hidden layer as embeddings.

The head and training recipe mirror the frozen representation model exactly:
feature width -> 128 -> embedding size -> 7 outputs with LeakyReLU slope 0.1
between layers, Xavier-uniform weights (gain 1) with zero biases, a batch
mean of summed squared errors on the four standardized regression targets
plus cross-entropy on the storey class, plain SGD, and a step-decay schedule
(x0.1 every 5 epochs by default).  Unlike the frozen path, every backbone
weight trains too.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import build_feature_extractor
from .fileio import write_embedding_file, write_manifest
from .preprocess import Preprocessing, list_images, load_images

AGE_CAP = 100.0
VALUE_SENTINEL = 1.0


@dataclass(frozen=True)
class FineTuneSchedule:
    epochs: int = 25
    initial_lr: float = 1e-4
    decay_factor: float = 0.1
    decay_every: int = 5
    batch_size: int = 32
    seed: int = 0

    def learning_rate(self, epoch: int) -> float:
        return self.initial_lr * self.decay_factor ** ((epoch - 1) // self.decay_every)


@dataclass(frozen=True)
class RelatedTasks:
    """Derived targets keyed by image id (filename stem)."""

    ids: list
    regression: np.ndarray  # (n, 4): age, log land, log building, log total
    floor_class: np.ndarray  # (n,) in {0, 1, 2}


def load_related_tasks(assessment_path, evaluation_year: int = 2018) -> RelatedTasks:
    """Derive the related-task targets from an assessment CSV.

    Same rules as the tabular pipeline: age capped at 100 (clamped at 0),
    natural-log monetary values, rows missing any field or carrying the 1$
    sentinel dropped, storeys capped at the 3+ class.
    """
    path = Path(assessment_path)
    if not path.exists():
        raise FileNotFoundError(f"assessment file not found: {path}")
    ids = []
    regression = []
    classes = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for raw in reader:
            if not raw or raw[0].startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in raw]
                if header != ["id", "year", "floors", "land", "building", "total"]:
                    raise ValueError(f"{path}: unexpected assessment header")
                continue
            if len(raw) != 6 or any(cell.strip() == "" for cell in raw):
                continue  # missing fields drop the row
            pid = raw[0].strip()
            year, floors, land, building, total = (float(c) for c in raw[1:])
            if VALUE_SENTINEL in (land, building, total):
                continue
            if min(land, building, total) <= 0 or floors < 1:
                raise ValueError(f"{path}: invalid values for id {pid}")
            age = min(max(evaluation_year - year, 0.0), AGE_CAP)
            ids.append(pid)
            regression.append(
                [age, math.log(land), math.log(building), math.log(total)]
            )
            classes.append(min(int(math.floor(floors)), 3) - 1)
    if not ids:
        raise ValueError(f"{path}: no usable assessment rows")
    return RelatedTasks(
        ids=ids,
        regression=np.asarray(regression, dtype=np.float64),
        floor_class=np.asarray(classes, dtype=np.int64),
    )


class FineTuneHead(nn.Module):
    """Feature width -> 128 -> embedding size -> 7, exposing the embedding."""

    def __init__(self, d_feat: int, embedding_size: int, hidden1: int = 128,
                 negative_slope: float = 0.1):
        super().__init__()
        self.fc1 = nn.Linear(d_feat, hidden1)
        self.fc2 = nn.Linear(hidden1, embedding_size)
        self.fc3 = nn.Linear(embedding_size, 7)
        self.negative_slope = negative_slope
        for layer in (self.fc1, self.fc2, self.fc3):
            nn.init.xavier_uniform_(layer.weight, gain=1.0)
            nn.init.zeros_(layer.bias)

    def forward(self, features):
        h = F.leaky_relu(self.fc1(features), self.negative_slope)
        embedding = F.leaky_relu(self.fc2(h), self.negative_slope)
        return self.fc3(embedding), embedding


class CompleteModel(nn.Module):
    def __init__(self, extractor, head):
        super().__init__()
        self.extractor = extractor
        self.head = head

    def forward(self, images):
        return self.head(self.extractor(images))


def _multitask_loss(outputs, reg_targets, class_targets):
    regression = outputs[:, :4]
    logits = outputs[:, 4:]
    squared = ((regression - reg_targets) ** 2).sum(dim=1).mean()
    ce = F.cross_entropy(logits, class_targets)
    return squared + ce


def finetune_and_export(
    image_dir,
    assessment_path,
    backbone: str,
    embedding_size: int,
    out_dir,
    schedule: FineTuneSchedule | None = None,
    pretrained: bool = False,
    weights_path: str | None = None,
    evaluation_year: int = 2018,
    image_size: int = 224,
    hidden1: int = 128,
) -> dict:
    """Train backbone + head on the related tasks; export embeddings.

    Writes ``embeddings_fine-tuned_<backbone>_<size>.csv`` (the grid's file
    naming), the per-epoch loss trace and a manifest.  Aborts with a
    RuntimeError carrying the trace if the loss diverges.
    """
    if embedding_size not in (8, 16, 32) and embedding_size < 1:
        raise ValueError("embedding_size must be a positive integer")
    schedule = schedule or FineTuneSchedule()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tasks = load_related_tasks(assessment_path, evaluation_year)
    task_index = {pid: i for i, pid in enumerate(tasks.ids)}

    preprocessing = Preprocessing(resize=image_size, crop=image_size)
    paths = list_images(image_dir)
    ids, images, skipped = load_images(paths, preprocessing)
    keep = [i for i, pid in enumerate(ids) if pid in task_index]
    unmatched = [ids[i] for i in range(len(ids)) if i not in set(keep)]
    if not keep:
        raise ValueError("no images align with the assessment data")
    images = images[keep]
    ids = [ids[i] for i in keep]
    rows = [task_index[pid] for pid in ids]
    regression = tasks.regression[rows]
    classes = tasks.floor_class[rows]

    # standardize the regression targets on the aligned training set
    reg_mean = regression.mean(axis=0)
    reg_std = regression.std(axis=0)
    reg_std = np.where(reg_std > 0, reg_std, 1.0)
    reg_targets = torch.from_numpy((regression - reg_mean) / reg_std).float()
    class_targets = torch.from_numpy(classes)

    torch.manual_seed(schedule.seed)
    extractor, d_feat, weights_desc = build_feature_extractor(
        backbone,
        pretrained=pretrained,
        weights_path=weights_path,
        seed=schedule.seed,
        freeze=False,
    )
    head = FineTuneHead(d_feat, embedding_size, hidden1=hidden1)
    model = CompleteModel(extractor, head)
    model.train()
    optimizer = torch.optim.SGD(model.parameters(), lr=schedule.initial_lr)

    n = images.shape[0]
    trace = []
    for epoch in range(1, schedule.epochs + 1):
        for group in optimizer.param_groups:
            group["lr"] = schedule.learning_rate(epoch)
        generator = torch.Generator().manual_seed(schedule.seed * 100_003 + epoch)
        perm = torch.randperm(n, generator=generator)
        epoch_loss = 0.0
        for start in range(0, n, schedule.batch_size):
            batch = perm[start : start + schedule.batch_size]
            optimizer.zero_grad()
            outputs, _ = model(images[batch])
            loss = _multitask_loss(
                outputs, reg_targets[batch], class_targets[batch]
            )
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"fine-tuning diverged at epoch {epoch}; trace={trace}"
                )
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(batch)
        trace.append(epoch_loss / n)

    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, n, schedule.batch_size):
            _, embedding = model(images[start : start + schedule.batch_size])
            chunks.append(embedding.cpu().numpy().astype(np.float64))
    vectors = np.vstack(chunks)

    embedding_path = out / f"embeddings_fine-tuned_{backbone}_{embedding_size}.csv"
    write_embedding_file(
        embedding_path, ids, vectors, backbone=backbone, seed=schedule.seed
    )
    trace_path = out / f"loss_trace_fine-tuned_{backbone}_{embedding_size}.json"
    trace_path.write_text(json.dumps(trace) + "\n")
    manifest = {
        "task": "finetune",
        "backbone": backbone,
        "d_feat": d_feat,
        "embedding_size": embedding_size,
        "weights": weights_desc,
        "schedule": {
            "epochs": schedule.epochs,
            "initial_lr": schedule.initial_lr,
            "decay_factor": schedule.decay_factor,
            "decay_every": schedule.decay_every,
            "batch_size": schedule.batch_size,
            "seed": schedule.seed,
        },
        "preprocessing": preprocessing.describe(),
        "target_mean": [float(v) for v in reg_mean],
        "target_std": [float(v) for v in reg_std],
        "images": len(ids),
        "skipped": sorted(skipped),
        "unmatched": sorted(unmatched),
        "final_loss": trace[-1],
        "initial_loss": trace[0],
        "output": embedding_path.name,
    }
    write_manifest(
        out / f"manifest_finetune_{backbone}_{embedding_size}.json", manifest
    )
    return manifest
