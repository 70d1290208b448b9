"""Synthetic worlds with known ground truth for end-to-end verification.

A world draws standard-normal latent vectors per property, mixes them through
a fixed random map with a rectifier into backbone-like feature vectors, and
derives assessment-style related-task data from linear functions of the same
latents.  Claims are then simulated from the generalized linear models the
package fits, so every fitted quantity has a known target:

* ``signal_source="latent"`` makes counts depend on the latents, which the
  feature vectors (and hence embeddings) carry;
* ``signal_source="none"`` zeroes that contribution, giving a null world in
  which embeddings are informationless by construction.

Everything is a pure function of (spec, seed) and the emitted files use the
same formats the loaders consume, so the whole pipeline runs without any
external data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.stats

from .errors import SchemaError
from .ingest import (
    PERILS,
    AssessmentTable,
    FeatureMatrix,
    PolicyTable,
    TaskTable,
    derive_task_targets,
    write_assessment_table,
    write_feature_table,
    write_policy_table,
)

DEFAULT_FLOOR_PROBS = (0.55, 0.35, 0.10)


@dataclass(frozen=True)
class PerilCoefficients:
    """Ground-truth linear predictor for one peril's count or severity model.

    ``cage_effects[0]`` should be zero so the reference-level dummy coding
    identifies the remaining effects directly.
    """

    intercept: float
    cage_effects: tuple[float, ...]  # one per cage level, first is reference
    roof: float
    bage: float
    limit: float
    latent: tuple[float, ...]

    def __post_init__(self):
        if len(self.cage_effects) != 15:
            raise SchemaError("cage_effects must have 15 entries")

    def linear_predictor(self, cage, roof, bage, limit, latents, use_latent: bool):
        eta = (
            self.intercept
            + np.asarray(self.cage_effects)[np.asarray(cage) - 1]
            + self.roof * roof
            + self.bage * bage
            + self.limit * limit
        )
        if use_latent:
            eta = eta + latents @ np.asarray(self.latent)
        return eta


@dataclass(frozen=True)
class SyntheticSpec:
    """Dimensions, mixing maps and ground-truth coefficients of a world."""

    n_properties: int = 2000
    d_feat: int = 64
    latent_dim: int = 3
    seed: int = 0
    mix_hidden: int = 16
    linear_mix_scale: float = 0.7
    feature_noise: float = 0.05
    task_noise: float = 0.3
    floor_probs: tuple[float, float, float] = DEFAULT_FLOOR_PROBS
    observations_per_property: int = 3
    exposure_range: tuple[float, float] = (0.25, 1.0)
    severity_shape: float = 2.0
    frequency: dict = field(default_factory=dict)  # peril -> PerilCoefficients
    severity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_properties < 2 or self.latent_dim < 1:
            raise SchemaError("n_properties >= 2 and latent_dim >= 1 required")
        if min(self.feature_noise, self.task_noise) < 0:
            raise SchemaError("noise scales must be nonnegative")
        if abs(sum(self.floor_probs) - 1.0) > 1e-12 or min(self.floor_probs) <= 0:
            raise SchemaError("floor_probs must be positive and sum to 1")
        lo, hi = self.exposure_range
        if not 0 < lo <= hi <= 1:
            raise SchemaError("exposure_range must lie within (0, 1]")


def _flat_cage(scale: float, rng: np.random.Generator) -> tuple[float, ...]:
    effects = scale * rng.standard_normal(15)
    effects[0] = 0.0
    return tuple(effects)


def default_spec(
    n_properties: int = 2000,
    d_feat: int = 64,
    latent_dim: int = 3,
    seed: int = 0,
    latent_strength: float = 0.4,
    **overrides,
) -> SyntheticSpec:
    """A ready-to-use world: seven perils with water most frequent and a
    latent effect concentrated on the water and sbu perils."""
    rng = np.random.default_rng([seed, 915])
    base_rates = {
        "water": -1.2,
        "sbu": -2.0,
        "theft": -2.1,
        "other": -2.1,
        "wind": -2.8,
        "fire": -3.2,
        "hail": -4.0,
    }
    latent_on = {"water", "sbu"}
    frequency = {}
    severity = {}
    for peril in PERILS:
        strength = latent_strength if peril in latent_on else 0.0
        direction = rng.standard_normal(latent_dim)
        direction /= np.linalg.norm(direction)
        frequency[peril] = PerilCoefficients(
            intercept=base_rates[peril],
            cage_effects=_flat_cage(0.05, rng),
            roof=0.004,
            bage=0.002,
            limit=0.02,
            latent=tuple(strength * direction),
        )
        sev_direction = rng.standard_normal(latent_dim)
        sev_direction /= np.linalg.norm(sev_direction)
        # Inverse-link scale: eta' around 1/3 keeps mean severities near 3
        # (in units of 10k say) and comfortably positive.
        severity[peril] = PerilCoefficients(
            intercept=0.35,
            cage_effects=tuple([0.0] * 15),
            roof=0.0005,
            bage=0.0002,
            limit=-0.004,
            latent=tuple(0.02 * strength * sev_direction),
        )
    return SyntheticSpec(
        n_properties=n_properties,
        d_feat=d_feat,
        latent_dim=latent_dim,
        seed=seed,
        frequency=frequency,
        severity=severity,
        **overrides,
    )


@dataclass(frozen=True)
class SynthWorld:
    """Latents plus every derived table for one generated world."""

    spec: SyntheticSpec
    property_id: np.ndarray
    latents: np.ndarray
    features: FeatureMatrix
    assessment: AssessmentTable
    tasks: TaskTable


def _task_score(latents, direction, noise_scale, rng) -> np.ndarray:
    """A standard-normal score: unit-norm latent projection plus noise."""
    raw = latents @ direction
    if noise_scale > 0:
        raw = raw + noise_scale * rng.standard_normal(latents.shape[0])
    return raw / np.sqrt(1.0 + noise_scale**2)


def gen_world(spec: SyntheticSpec) -> SynthWorld:
    """Draw latents, mix features, and derive assessment-style task data."""
    rng = np.random.default_rng([spec.seed, 1])
    n, k = spec.n_properties, spec.latent_dim
    ids = np.array([f"H{i:06d}" for i in range(n)], dtype=object)
    z = rng.standard_normal((n, k))

    # Feature mixing: a rectified random map plus a linear leak of the
    # latents, so a linear probe recovers part of z and an MLP recovers more.
    mix_a = rng.standard_normal((k, spec.mix_hidden))
    mix_bias = rng.standard_normal(spec.mix_hidden) * 0.5
    mix_b = rng.standard_normal((spec.mix_hidden, spec.d_feat)) / np.sqrt(
        spec.mix_hidden
    )
    mix_linear = rng.standard_normal((k, spec.d_feat)) / np.sqrt(k)
    hidden = np.maximum(z @ mix_a + mix_bias, 0.0)
    features = hidden @ mix_b + spec.linear_mix_scale * (z @ mix_linear)
    if spec.feature_noise > 0:
        features = features + spec.feature_noise * rng.standard_normal(features.shape)

    directions = rng.standard_normal((5, k))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    age_score = _task_score(z, directions[0], spec.task_noise, rng)
    ages = np.clip(np.round(40.0 + 18.0 * age_score), 0, 100).astype(int)
    years = 2018 - ages

    land = np.exp(12.0 + 0.6 * _task_score(z, directions[1], spec.task_noise, rng))
    building = np.exp(12.5 + 0.5 * _task_score(z, directions[2], spec.task_noise, rng))
    total = np.exp(13.0 + 0.5 * _task_score(z, directions[3], spec.task_noise, rng))

    floor_score = _task_score(z, directions[4], spec.task_noise, rng)
    p1, p2, _ = spec.floor_probs
    t1 = scipy.stats.norm.ppf(p1)
    t2 = scipy.stats.norm.ppf(p1 + p2)
    floors = np.where(floor_score < t1, 1, np.where(floor_score < t2, 2, 3))
    # Give the 3+ class some literal storey counts above three so the cap in
    # the derivation is exercised.
    tall = floors == 3
    floors = floors.astype(np.int64)
    floors[tall] = rng.integers(3, 6, size=int(tall.sum()))

    assessment = AssessmentTable(
        property_id=ids,
        year=years.astype(float),
        floors=floors.astype(float),
        land=land,
        building=building,
        total=total,
    )
    tasks, report = derive_task_targets(assessment)
    if report.n_dropped_missing or report.n_dropped_sentinel:
        raise SchemaError("synthetic assessment rows should never be dropped")
    return SynthWorld(
        spec=spec,
        property_id=ids,
        latents=z,
        features=FeatureMatrix(
            property_id=ids, features=features, backbone_name="synthnet"
        ),
        assessment=assessment,
        tasks=tasks,
    )


def gen_features_and_tasks(spec: SyntheticSpec) -> tuple[FeatureMatrix, TaskTable]:
    world = gen_world(spec)
    return world.features, world.tasks


def gen_claims(
    world: SynthWorld,
    signal_source: str = "latent",
    seed: int = 0,
    frequency: dict | None = None,
    severity: dict | None = None,
) -> PolicyTable:
    """Simulate policy observations from the world's ground-truth GLMs.

    Counts are Poisson with mean ``exposure * exp(eta)``; per-claim severities
    are gamma with mean ``1 / eta'`` (a nonpositive ``eta'`` anywhere rejects
    the configuration).  ``signal_source="none"`` removes the latent term
    from every linear predictor.
    """
    if signal_source not in ("latent", "none"):
        raise SchemaError("signal_source must be 'latent' or 'none'")
    spec = world.spec
    frequency = dict(spec.frequency if frequency is None else frequency)
    severity = dict(spec.severity if severity is None else severity)
    missing = [p for p in PERILS if p not in frequency or p not in severity]
    if missing:
        raise SchemaError(f"coefficients missing for perils: {missing}")

    rng = np.random.default_rng([seed, 2])
    n_prop = spec.n_properties
    m = spec.observations_per_property
    n = n_prop * m
    prop_idx = np.repeat(np.arange(n_prop), m)

    lo, hi = spec.exposure_range
    exposure = rng.uniform(lo, hi, size=n)
    cage = rng.integers(1, 16, size=n)
    roof = rng.uniform(0.0, 30.0, size=n)
    bage = rng.uniform(0.0, 100.0, size=n)
    limit = rng.uniform(1.0, 10.0, size=n)
    latents = world.latents[prop_idx]
    use_latent = signal_source == "latent"

    counts = {}
    losses = {}
    for peril in PERILS:
        eta = frequency[peril].linear_predictor(
            cage, roof, bage, limit, latents, use_latent
        )
        counts[peril] = rng.poisson(exposure * np.exp(eta))

        eta_sev = severity[peril].linear_predictor(
            cage, roof, bage, limit, latents, use_latent
        )
        if np.any(eta_sev <= 0):
            raise SchemaError(
                f"severity linear predictor nonpositive for peril '{peril}'; "
                "choose coefficients keeping it strictly positive"
            )
        loss = np.zeros(n)
        hit = counts[peril] > 0
        if hit.any():
            shape = spec.severity_shape
            mean = 1.0 / eta_sev[hit]
            # Sum of `count` gamma(shape, mean/shape) claims per observation.
            loss[hit] = rng.gamma(
                shape * counts[peril][hit], mean / shape
            )
        losses[peril] = loss

    return PolicyTable(
        observation_id=np.array([f"O{i:07d}" for i in range(n)], dtype=object),
        property_id=world.property_id[prop_idx],
        exposure=exposure,
        cage=cage,
        roof=roof,
        bage=bage,
        limit=limit,
        counts=counts,
        losses=losses,
    )


def oracle_poisson_intercept(counts, exposures) -> float:
    """Closed-form intercept-only Poisson MLE: ``ln(sum counts / sum exposure)``.

    All-zero counts are a boundary MLE, reported as ``-inf`` with a warning.
    """
    c = np.asarray(counts, dtype=np.float64)
    w = np.asarray(exposures, dtype=np.float64)
    if c.shape != w.shape:
        raise SchemaError("counts and exposures must align")
    total_exposure = float(np.sum(w))
    total_counts = float(np.sum(c))
    if total_exposure <= 0 and total_counts == 0:
        raise SchemaError("all counts and exposures are zero")
    if total_exposure <= 0:
        raise SchemaError("total exposure must be positive")
    if total_counts == 0:
        warnings.warn("all counts are zero; intercept MLE is -inf (boundary)")
        return float("-inf")
    return float(np.log(total_counts / total_exposure))


def write_synthetic_dataset(
    out_dir,
    spec: SyntheticSpec,
    signal_source: str = "latent",
    claims_seed: int = 0,
    feature_name: str = "features_synthnet.csv",
) -> dict[str, Path]:
    """Emit a full synthetic dataset in the loaders' file formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = gen_world(spec)
    policy = gen_claims(world, signal_source=signal_source, seed=claims_seed)
    paths = {
        "features": out / feature_name,
        "assessment": out / "assessment.csv",
        "policy": out / "policy.csv",
    }
    write_feature_table(paths["features"], world.features)
    write_assessment_table(paths["assessment"], world.assessment)
    write_policy_table(paths["policy"], policy)
    return paths
