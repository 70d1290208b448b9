"""Filtering and censoring of facade images from segmentation label maps.

An image is discarded when too little of it shows a dwelling; pixels showing
people or temporary objects are censored by replacing them with the image's
average pixel value.  Images are (h, w, 3) float arrays in [0, 1]; masks are
(h, w) integer label maps sharing the image's spatial shape.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import SchemaError

DEFAULT_HOUSE_CATEGORIES = ("house", "building", "edifice")
# "person" plus objects likely out for garbage collection; the object list is
# configuration, not an exhaustive taxonomy.
DEFAULT_CENSOR_CATEGORIES = ("person", "seat", "desk", "lamp", "toy", "pillow")
DEFAULT_HOUSE_FRACTION_THRESHOLD = 0.05


@dataclass(frozen=True)
class CategoryPolicy:
    """Which mask labels count as dwelling, which get censored, and the
    keep/discard threshold on the dwelling fraction."""

    house_categories: frozenset[int]
    censor_categories: frozenset[int]
    house_fraction_threshold: float = DEFAULT_HOUSE_FRACTION_THRESHOLD

    def __post_init__(self):
        object.__setattr__(
            self, "house_categories", frozenset(int(c) for c in self.house_categories)
        )
        object.__setattr__(
            self,
            "censor_categories",
            frozenset(int(c) for c in self.censor_categories),
        )
        if not 0 < self.house_fraction_threshold < 1:
            raise ValueError("house_fraction_threshold must lie in (0, 1)")
        if self.house_categories & self.censor_categories:
            raise ValueError("house and censor category sets must be disjoint")
        if not self.house_categories:
            raise ValueError("house_categories must be nonempty")


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    house_fraction: float


@dataclass(frozen=True)
class FilterReport:
    """Per-image keep/discard decisions plus the aggregate discard rate."""

    decisions: tuple[FilterDecision, ...]
    discard_rate: float


def _check_image(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise SchemaError(f"image must have shape (h, w, 3), got {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise SchemaError("image dimensions must be positive")
    if arr.min() < 0 or arr.max() > 1:
        raise SchemaError("image values must lie in [0, 1]")
    return arr


def _check_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise SchemaError(f"mask must have shape (h, w), got {arr.shape}")
    if arr.size == 0:
        raise SchemaError("mask is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        raise SchemaError("mask labels must be integers")
    return arr


def house_fraction(mask, policy: CategoryPolicy) -> float:
    """Fraction of pixels whose label falls in the house category set."""
    arr = _check_mask(mask)
    member = np.isin(arr, sorted(policy.house_categories))
    return float(member.sum()) / arr.size


def filter_image(mask, policy: CategoryPolicy) -> FilterDecision:
    """Keep or discard an image from its mask.

    Discards when the house fraction is strictly below the threshold, so an
    image exactly at the threshold is kept.
    """
    fraction = house_fraction(mask, policy)
    return FilterDecision(
        keep=fraction >= policy.house_fraction_threshold,
        house_fraction=fraction,
    )


def censor_image(image, mask, policy: CategoryPolicy) -> np.ndarray:
    """Replace censored pixels with the per-channel mean of the rest.

    Pixels outside the censor categories are returned bit-identical; the mean
    is computed per image and per channel over the non-censored pixels only.
    """
    img = _check_image(image)
    msk = _check_mask(mask)
    if msk.shape != img.shape[:2]:
        raise SchemaError(
            f"mask shape {msk.shape} does not match image shape {img.shape[:2]}"
        )
    censored = np.isin(msk, sorted(policy.censor_categories))
    out = img.copy()
    if not censored.any():
        return out
    if censored.all():
        raise SchemaError("every pixel is censored; no mean value is defined")
    means = img[~censored].mean(axis=0)
    out[censored] = means
    return out


def batch_filter_report(masks, policy: CategoryPolicy) -> FilterReport:
    """Apply :func:`filter_image` to a collection of masks."""
    decisions = tuple(filter_image(m, policy) for m in masks)
    if not decisions:
        raise SchemaError("mask collection is empty")
    discarded = sum(1 for d in decisions if not d.keep)
    return FilterReport(
        decisions=decisions, discard_rate=discarded / len(decisions)
    )


# ---------------------------------------------------------------------------
# raster and vocabulary file interchange
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as a float array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(path, image) -> None:
    """Save a float image in [0, 1] as an 8-bit RGB PNG (values quantized)."""
    img = _check_image(image)
    data = np.round(img * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """Load a single-channel label PNG as an integer mask."""
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "P"):
            raise SchemaError(f"{path}: mask PNG must be single-channel, got mode {im.mode}")
        arr = np.asarray(im.convert("I"), dtype=np.int64)
    return arr


def save_mask(path, mask) -> None:
    arr = _check_mask(mask)
    if arr.min() < 0 or arr.max() > 255:
        raise SchemaError("mask labels must fit in an 8-bit PNG (0..255)")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")


def load_category_vocabulary(path) -> dict[int, str]:
    """Read an ``id,name`` mapping file shipped alongside mask files."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    vocab: dict[int, str] = {}
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or raw[0].startswith("#"):
                continue
            if len(raw) != 2:
                raise SchemaError(f"{path}: line {lineno}: expected 'id,name'")
            try:
                label = int(raw[0])
            except ValueError:
                raise SchemaError(
                    f"{path}: line {lineno}: label {raw[0]!r} is not an integer"
                ) from None
            name = raw[1].strip().lower()
            if label in vocab:
                raise SchemaError(f"{path}: duplicate label {label}")
            vocab[label] = name
    if not vocab:
        raise SchemaError(f"{path}: empty vocabulary")
    return vocab


def write_category_vocabulary(path, vocab: dict[int, str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for label in sorted(vocab):
            writer.writerow([label, vocab[label]])


def policy_from_vocabulary(
    vocab: dict[int, str],
    house_names=DEFAULT_HOUSE_CATEGORIES,
    censor_names=DEFAULT_CENSOR_CATEGORIES,
    house_fraction_threshold: float = DEFAULT_HOUSE_FRACTION_THRESHOLD,
) -> CategoryPolicy:
    """Resolve category names against a vocabulary to build a policy.

    Names absent from the vocabulary are skipped with a warning, since label
    inventories differ between segmentation models.  Vocabulary entries may
    list synonyms separated by ';' (e.g. ``building;edifice``).
    """
    by_name: dict[str, int] = {}
    for label, name in vocab.items():
        for synonym in name.split(";"):
            by_name.setdefault(synonym.strip().lower(), label)

    def resolve(names, kind):
        found = set()
        for name in names:
            label = by_name.get(name.strip().lower())
            if label is None:
                warnings.warn(f"{kind} category {name!r} not in vocabulary; skipped")
            else:
                found.add(label)
        return found

    house = resolve(house_names, "house")
    censor = resolve(censor_names, "censor")
    if not house:
        raise SchemaError("no house category resolved against the vocabulary")
    return CategoryPolicy(
        house_categories=frozenset(house),
        censor_categories=frozenset(censor),
        house_fraction_threshold=house_fraction_threshold,
    )


def write_filter_report(path, names, report: FilterReport) -> None:
    """Write per-image decisions and the aggregate discard rate as CSV."""
    names = list(names)
    if len(names) != len(report.decisions):
        raise ValueError("one name per decision is required")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "house_fraction", "decision"])
        for name, dec in zip(names, report.decisions):
            writer.writerow(
                [name, f"{dec.house_fraction:.6f}", "keep" if dec.keep else "discard"]
            )
        writer.writerow(["__discard_rate__", f"{report.discard_rate:.6f}", ""])
