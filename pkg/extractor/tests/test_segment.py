import numpy as np
from PIL import Image

from svextract.segment import segment_images
from svextract.vocabulary import CENSOR_LABELS, HOUSE_LABELS, SCENE_CATEGORIES


def test_masks_match_image_shapes_and_vocabulary(small_images, tmp_path):
    manifest = segment_images(small_images, tmp_path, seed=0)
    assert manifest["masks"] == 6
    assert manifest["skipped"] == ["broken.png"]
    for image_path in sorted(small_images.glob("img*.png")):
        mask_path = tmp_path / "masks" / image_path.name
        assert mask_path.exists()
        with Image.open(image_path) as img:
            expected = (img.height, img.width)
        mask = np.asarray(Image.open(mask_path))
        assert mask.shape == expected
        assert mask.min() >= 1
        assert mask.max() <= len(SCENE_CATEGORIES)
    vocab_lines = (tmp_path / "vocabulary.csv").read_text().splitlines()
    assert len(vocab_lines) == len(SCENE_CATEGORIES)


def test_vocabulary_covers_cleaning_categories():
    assert SCENE_CATEGORIES[2].startswith("building;edifice")
    assert SCENE_CATEGORIES[26] == "house"
    assert SCENE_CATEGORIES[13].startswith("person;individual")
    for label in HOUSE_LABELS + CENSOR_LABELS:
        assert label in SCENE_CATEGORIES
    names = {
        synonym
        for label in CENSOR_LABELS
        for synonym in SCENE_CATEGORIES[label].split(";")
    }
    for required in ("person", "seat", "desk", "lamp", "toy", "pillow"):
        assert required in names


def test_segmentation_deterministic(small_images, tmp_path):
    a = segment_images(small_images, tmp_path / "a", seed=5)
    b = segment_images(small_images, tmp_path / "b", seed=5)
    assert a["weights_checksum"] == b["weights_checksum"]
    for name in sorted(p.name for p in (tmp_path / "a" / "masks").iterdir()):
        mask_a = np.asarray(Image.open(tmp_path / "a" / "masks" / name))
        mask_b = np.asarray(Image.open(tmp_path / "b" / "masks" / name))
        np.testing.assert_array_equal(mask_a, mask_b)
