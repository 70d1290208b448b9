"""Conformance gate: outputs interoperate with the tabular pipeline's loaders.

The extractor talks to the primary package only through files; these tests
prove every exported artifact passes the consuming loaders unmodified.
"""

import hashlib

import numpy as np
import pytest

from svextract.features import extract_features
from svextract.finetune import FineTuneSchedule, finetune_and_export
from svextract.preprocess import Preprocessing
from svextract.segment import segment_images

embedrate_ingest = pytest.importorskip("embedrate.ingest")
embedrate_embeddings = pytest.importorskip("embedrate.embeddings")
embedrate_imageprep = pytest.importorskip("embedrate.imageprep")

FAST = Preprocessing(resize=64, crop=64)

WIDTHS = {
    "resnet18": 512,
    "resnet50": 2048,
    "resnet101": 2048,
    "densenet121": 1024,
}


@pytest.mark.parametrize("backbone", sorted(WIDTHS))
def test_feature_widths_and_ingest_validation(backbone, small_images, tmp_path):
    manifest = extract_features(
        small_images, backbone, tmp_path, seed=0, preprocessing=FAST
    )
    assert manifest["d_feat"] == WIDTHS[backbone]
    table = embedrate_ingest.load_feature_table(
        tmp_path / f"features_{backbone}.csv", backbone_name=backbone
    )
    assert table.d_feat == WIDTHS[backbone]
    assert table.n == 6


def test_repeated_extraction_checksum_identical(small_images, tmp_path):
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        extract_features(small_images, "resnet18", out, seed=0, preprocessing=FAST)
        digests.append(
            hashlib.sha256((out / "features_resnet18.csv").read_bytes()).hexdigest()
        )
    assert digests[0] == digests[1]


def test_finetune_embeddings_pass_embedding_reader(smoke_set, tmp_path):
    images, assessment = smoke_set
    manifest = finetune_and_export(
        images,
        assessment,
        backbone="resnet18",
        embedding_size=4,
        out_dir=tmp_path,
        schedule=FineTuneSchedule(epochs=2, initial_lr=1e-3, batch_size=32, seed=1),
        image_size=48,
    )
    assert manifest["final_loss"] < manifest["initial_loss"]
    embeddings = embedrate_embeddings.read_embeddings(
        tmp_path / "embeddings_fine-tuned_resnet18_4.csv"
    )
    assert embeddings.provenance.approach == "fine-tuned"
    assert embeddings.provenance.backbone == "resnet18"
    assert embeddings.embedding_size == 4
    assert embeddings.n == manifest["images"]


def test_masks_and_vocabulary_feed_image_cleaning(small_images, tmp_path):
    segment_images(small_images, tmp_path, seed=0)
    vocab = embedrate_imageprep.load_category_vocabulary(tmp_path / "vocabulary.csv")
    policy = embedrate_imageprep.policy_from_vocabulary(vocab)
    assert policy.house_categories == {2, 26}
    assert policy.censor_categories == {13, 32, 34, 37, 58, 109}
    masks = [
        embedrate_imageprep.load_mask(p)
        for p in sorted((tmp_path / "masks").iterdir())
    ]
    report = embedrate_imageprep.batch_filter_report(masks, policy)
    assert len(report.decisions) == 6
    # random-init masks carry arbitrary labels; the flow itself must not care
    for mask, image_path in zip(masks, sorted(small_images.glob("img*.png"))):
        image = embedrate_imageprep.load_image(image_path)
        censored = embedrate_imageprep.censor_image(image, mask, policy)
        assert censored.shape == image.shape
        assert float(np.max(censored)) <= 1.0
