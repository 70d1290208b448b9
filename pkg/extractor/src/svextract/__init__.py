"""Feature, mask and embedding extraction from facade images."""

from .backbones import BACKBONES, BackboneSpec, build_feature_extractor
from .features import extract_features
from .finetune import FineTuneSchedule, finetune_and_export, load_related_tasks
from .segment import segment_images
from .vocabulary import CENSOR_LABELS, HOUSE_LABELS, SCENE_CATEGORIES

__version__ = "0.1.0"

__all__ = [
    "BACKBONES",
    "BackboneSpec",
    "CENSOR_LABELS",
    "FineTuneSchedule",
    "HOUSE_LABELS",
    "SCENE_CATEGORIES",
    "build_feature_extractor",
    "extract_features",
    "finetune_and_export",
    "load_related_tasks",
    "segment_images",
]
