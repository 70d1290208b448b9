"""Backbone image models and their pooled feature vectors.

Each backbone maps a batch of preprocessed images to one global feature
vector per image: the final convolutional output under global average
pooling, flattened.  The name/width pairing is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision import models


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    d_feat: int


BACKBONES = {
    "resnet18": BackboneSpec("resnet18", 512),
    "resnet50": BackboneSpec("resnet50", 2048),
    "resnet101": BackboneSpec("resnet101", 2048),
    "densenet121": BackboneSpec("densenet121", 1024),
}

_BUILDERS = {
    "resnet18": models.resnet18,
    "resnet50": models.resnet50,
    "resnet101": models.resnet101,
    "densenet121": models.densenet121,
}

_PRETRAINED_WEIGHTS = {
    "resnet18": "IMAGENET1K_V1",
    "resnet50": "IMAGENET1K_V1",
    "resnet101": "IMAGENET1K_V1",
    "densenet121": "IMAGENET1K_V1",
}


class _DenseNetFeatures(nn.Module):
    def __init__(self, densenet):
        super().__init__()
        self.features = densenet.features

    def forward(self, x):
        out = F.relu(self.features(x), inplace=True)
        return F.adaptive_avg_pool2d(out, 1).flatten(1)


class _ResNetFeatures(nn.Module):
    def __init__(self, resnet):
        super().__init__()
        self.body = nn.Sequential(*list(resnet.children())[:-1])

    def forward(self, x):
        return self.body(x).flatten(1)


def spec_for(name: str) -> BackboneSpec:
    if name not in BACKBONES:
        raise ValueError(
            f"unknown backbone {name!r}; choose from {sorted(BACKBONES)}"
        )
    return BACKBONES[name]


def build_backbone(
    name: str,
    pretrained: bool = False,
    weights_path: str | None = None,
    seed: int = 0,
) -> tuple[nn.Module, str]:
    """Build the full classifier model for a backbone.

    Weight resolution order: an explicit ``weights_path`` state dict, the
    torchvision pretrained registry when ``pretrained`` is set (requires the
    weights to be downloadable or cached), otherwise seeded random
    initialization.  Returns the model and a string describing the weights
    for the manifest.
    """
    spec = spec_for(name)
    builder = _BUILDERS[spec.name]
    if weights_path is not None:
        path = Path(weights_path)
        if not path.exists():
            raise FileNotFoundError(f"weights file not found: {path}")
        model = builder(weights=None)
        model.load_state_dict(torch.load(path, map_location="cpu"))
        return model, f"file:{path}"
    if pretrained:
        model = builder(weights=_PRETRAINED_WEIGHTS[spec.name])
        return model, f"torchvision:{_PRETRAINED_WEIGHTS[spec.name]}"
    torch.manual_seed(seed)
    return builder(weights=None), f"random-init:seed={seed}"


def build_feature_extractor(
    name: str,
    pretrained: bool = False,
    weights_path: str | None = None,
    seed: int = 0,
    freeze: bool = True,
) -> tuple[nn.Module, int, str]:
    """The backbone truncated to its pooled feature vector.

    Returns (module, d_feat, weights description).  With ``freeze`` the
    module is put in eval mode with gradients disabled (the frozen and PCA
    paths); the fine-tuning path keeps gradients on.
    """
    spec = spec_for(name)
    model, weights_desc = build_backbone(
        name, pretrained=pretrained, weights_path=weights_path, seed=seed
    )
    if spec.name == "densenet121":
        extractor: nn.Module = _DenseNetFeatures(model)
    else:
        extractor = _ResNetFeatures(model)
    if freeze:
        extractor.eval()
        for param in extractor.parameters():
            param.requires_grad_(False)
    return extractor, spec.d_feat, weights_desc


def state_checksum(module: nn.Module) -> str:
    """Order-stable hash of all parameters and buffers, for purity checks."""
    import hashlib

    digest = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        digest.update(key.encode())
        digest.update(state[key].detach().cpu().numpy().tobytes())
    return digest.hexdigest()
