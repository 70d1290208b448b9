"""Plain-text run configuration.

One INI-style file declares data paths, grid axes, seeds, thresholds and the
output directory; every tunable default in the pipeline can be overridden
there.  Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError
from .imageprep import (
    DEFAULT_CENSOR_CATEGORIES,
    DEFAULT_HOUSE_CATEGORIES,
    DEFAULT_HOUSE_FRACTION_THRESHOLD,
)


@dataclass
class RunConfig:
    base_dir: Path
    out_dir: Path
    # data
    assessment_path: Path | None = None
    policy_path: Path | None = None
    feature_paths: dict = field(default_factory=dict)  # backbone -> Path
    # images (optional)
    images_dir: Path | None = None
    masks_dir: Path | None = None
    vocabulary_path: Path | None = None
    censored_out: Path | None = None
    house_fraction_threshold: float = DEFAULT_HOUSE_FRACTION_THRESHOLD
    house_categories: tuple = DEFAULT_HOUSE_CATEGORIES
    censor_categories: tuple = DEFAULT_CENSOR_CATEGORIES
    # grid
    approaches: tuple = ("pca", "frozen")
    embedding_sizes: tuple = (8, 16, 32)
    perils: tuple | None = None  # None = family defaults
    families: tuple = ("frequency", "severity")
    decorrelate: bool = False
    alpha: float = 0.05
    severity_cap: float = 100_000.0
    # split
    split_fraction: float = 0.9
    split_seed: int = 0
    group_key: str = "property_id"
    # representation training
    epochs: int = 25
    initial_lr: float = 1e-4
    decay_factor: float = 0.1
    decay_every: int = 5
    batch_size: int = 128
    train_seed: int = 0
    hidden1: int = 128
    # glm
    max_iterations: int = 100
    tolerance: float = 1e-10
    # evaluation
    evaluation_year: int = 2018
    # synthetic data generation
    synth_n_properties: int = 2000
    synth_d_feat: int = 64
    synth_latent_dim: int = 3
    synth_seed: int = 0
    synth_observations_per_property: int = 3
    synth_signal: str = "latent"
    synth_claims_seed: int = 0
    synth_latent_strength: float = 0.4

    @property
    def backbones(self) -> tuple:
        return tuple(sorted(self.feature_paths))

    def embedding_file(self, approach: str, backbone: str, size: int) -> Path:
        return self.out_dir / f"embeddings_{approach}_{backbone}_{size}.csv"


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def load_config(path) -> RunConfig:
    """Parse a run configuration file."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    base = path.resolve().parent

    def resolve(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    if "output" not in parser or "dir" not in parser["output"]:
        raise SchemaError("config must declare [output] dir")
    cfg = RunConfig(base_dir=base, out_dir=resolve(parser["output"]["dir"]))

    if "data" in parser:
        data = parser["data"]
        if "assessment" in data:
            cfg.assessment_path = resolve(data["assessment"])
        if "policy" in data:
            cfg.policy_path = resolve(data["policy"])
        for key, value in data.items():
            if key.startswith("feature."):
                cfg.feature_paths[key.split(".", 1)[1]] = resolve(value)

    if "images" in parser:
        images = parser["images"]
        if "images" in images:
            cfg.images_dir = resolve(images["images"])
        if "masks" in images:
            cfg.masks_dir = resolve(images["masks"])
        if "vocabulary" in images:
            cfg.vocabulary_path = resolve(images["vocabulary"])
        if "censored_out" in images:
            cfg.censored_out = resolve(images["censored_out"])
        if "house_fraction_threshold" in images:
            cfg.house_fraction_threshold = images.getfloat(
                "house_fraction_threshold"
            )
        if "house_categories" in images:
            cfg.house_categories = tuple(_split_list(images["house_categories"]))
        if "censor_categories" in images:
            cfg.censor_categories = tuple(_split_list(images["censor_categories"]))

    if "grid" in parser:
        grid = parser["grid"]
        if "approaches" in grid:
            cfg.approaches = tuple(_split_list(grid["approaches"]))
        if "embedding_sizes" in grid:
            cfg.embedding_sizes = tuple(
                int(v) for v in _split_list(grid["embedding_sizes"])
            )
        if "perils" in grid:
            cfg.perils = tuple(_split_list(grid["perils"]))
        if "families" in grid:
            cfg.families = tuple(_split_list(grid["families"]))
        if "decorrelate" in grid:
            cfg.decorrelate = grid.getboolean("decorrelate")
        if "alpha" in grid:
            cfg.alpha = grid.getfloat("alpha")
        if "severity_cap" in grid:
            cfg.severity_cap = grid.getfloat("severity_cap")

    if "split" in parser:
        split = parser["split"]
        if "fraction" in split:
            cfg.split_fraction = split.getfloat("fraction")
        if "seed" in split:
            cfg.split_seed = split.getint("seed")
        if "group_key" in split:
            cfg.group_key = split["group_key"]

    if "train" in parser:
        train = parser["train"]
        for name, getter in (
            ("epochs", train.getint),
            ("decay_every", train.getint),
            ("batch_size", train.getint),
            ("hidden1", train.getint),
        ):
            if name in train:
                setattr(cfg, name, getter(name))
        if "initial_lr" in train:
            cfg.initial_lr = train.getfloat("initial_lr")
        if "decay_factor" in train:
            cfg.decay_factor = train.getfloat("decay_factor")
        if "seed" in train:
            cfg.train_seed = train.getint("seed")

    if "glm" in parser:
        glm_section = parser["glm"]
        if "max_iterations" in glm_section:
            cfg.max_iterations = glm_section.getint("max_iterations")
        if "tolerance" in glm_section:
            cfg.tolerance = glm_section.getfloat("tolerance")

    if "evaluation" in parser and "evaluation_year" in parser["evaluation"]:
        cfg.evaluation_year = parser["evaluation"].getint("evaluation_year")

    if "synth" in parser:
        synth = parser["synth"]
        mapping = (
            ("n_properties", "synth_n_properties", synth.getint),
            ("d_feat", "synth_d_feat", synth.getint),
            ("latent_dim", "synth_latent_dim", synth.getint),
            ("seed", "synth_seed", synth.getint),
            (
                "observations_per_property",
                "synth_observations_per_property",
                synth.getint,
            ),
            ("claims_seed", "synth_claims_seed", synth.getint),
            ("latent_strength", "synth_latent_strength", synth.getfloat),
        )
        for key, attr, getter in mapping:
            if key in synth:
                setattr(cfg, attr, getter(key))
        if "signal" in synth:
            if synth["signal"] not in ("latent", "none"):
                raise SchemaError("synth signal must be 'latent' or 'none'")
            cfg.synth_signal = synth["signal"]

    return cfg
