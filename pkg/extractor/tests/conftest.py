import csv

import numpy as np
import pytest
from PIL import Image


def make_image_dir(root, n, size=64, corrupt=False, seed=0):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        data = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        Image.fromarray(data, mode="RGB").save(root / f"img{i:04d}.png")
    if corrupt:
        (root / "broken.png").write_bytes(b"this is not a png")
    return root


def write_assessment(path, ids, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "year", "floors", "land", "building", "total"])
        for pid in ids:
            writer.writerow(
                [
                    pid,
                    int(rng.integers(1920, 2018)),
                    int(rng.integers(1, 5)),
                    f"{rng.uniform(5e4, 5e5):.0f}",
                    f"{rng.uniform(1e5, 8e5):.0f}",
                    f"{rng.uniform(2e5, 1e6):.0f}",
                ]
            )


@pytest.fixture(scope="session")
def small_images(tmp_path_factory):
    """Six decodable images plus one corrupt file."""
    return make_image_dir(
        tmp_path_factory.mktemp("imgs") / "small", 6, size=64, corrupt=True
    )


@pytest.fixture(scope="session")
def smoke_set(tmp_path_factory):
    """A 200-image set with matching assessment data (one image unmatched)."""
    root = tmp_path_factory.mktemp("smoke")
    images = make_image_dir(root / "images", 200, size=48, seed=1)
    ids = [f"img{i:04d}" for i in range(199)]  # img0199 has no assessment row
    write_assessment(root / "assessment.csv", ids, seed=2)
    return images, root / "assessment.csv"
