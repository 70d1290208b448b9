import numpy as np
import pytest

from embedrate import glm
from embedrate.errors import SchemaError
from embedrate.ingest import (
    PERILS,
    load_assessment_table,
    load_feature_table,
    load_policy_table,
)
from embedrate.synth import (
    PerilCoefficients,
    default_spec,
    gen_claims,
    gen_features_and_tasks,
    gen_world,
    oracle_poisson_intercept,
    write_synthetic_dataset,
)


class TestWorldGeneration:
    def test_determinism(self):
        spec = default_spec(n_properties=300, d_feat=16, seed=4)
        a = gen_world(spec)
        b = gen_world(spec)
        np.testing.assert_array_equal(a.features.features, b.features.features)
        np.testing.assert_array_equal(a.tasks.age, b.tasks.age)
        np.testing.assert_array_equal(a.latents, b.latents)

    def test_noiseless_tasks_are_functions_of_latents(self):
        spec = default_spec(n_properties=5000, d_feat=16, seed=5, task_noise=0.0)
        world = gen_world(spec)
        # a linear model on the latents recovers the age up to the integer
        # rounding and the [0, 100] clipping
        design = np.hstack([np.ones((world.latents.shape[0], 1)), world.latents])
        coef, *_ = np.linalg.lstsq(design, world.tasks.age, rcond=None)
        residual = world.tasks.age - design @ coef
        r2 = 1 - residual.var() / world.tasks.age.var()
        assert r2 > 0.99
        # and the tasks do not consume any other randomness: changing the
        # feature-noise scale leaves every target bit-identical
        other = gen_world(
            default_spec(
                n_properties=5000, d_feat=16, seed=5, task_noise=0.0,
                feature_noise=0.4,
            )
        )
        np.testing.assert_array_equal(other.tasks.age, world.tasks.age)
        np.testing.assert_array_equal(other.tasks.log_land, world.tasks.log_land)
        np.testing.assert_array_equal(
            other.tasks.floor_class, world.tasks.floor_class
        )
        assert not np.array_equal(other.features.features, world.features.features)

    def test_class_frequencies_match_thresholds(self):
        probs = (0.5, 0.3, 0.2)
        spec = default_spec(
            n_properties=100_000, d_feat=8, seed=6, floor_probs=probs
        )
        _, tasks = gen_features_and_tasks(spec)
        for cls, p in zip((1, 2, 3), probs):
            observed = np.mean(tasks.floor_class == cls)
            assert observed == pytest.approx(p, abs=0.02)

    def test_ages_respect_cap(self):
        _, tasks = gen_features_and_tasks(default_spec(n_properties=2000, seed=7))
        assert tasks.age.min() >= 0
        assert tasks.age.max() <= 100


class TestGenClaims:
    def zero_coefficients(self, latent_dim):
        return {
            p: PerilCoefficients(
                intercept=0.0,
                cage_effects=tuple([0.0] * 15),
                roof=0.0,
                bage=0.0,
                limit=0.0,
                latent=tuple([0.0] * latent_dim),
            )
            for p in PERILS
        }

    def test_unit_rate_with_zero_coefficients(self):
        spec = default_spec(
            n_properties=20_000,
            d_feat=8,
            seed=8,
            observations_per_property=1,
            exposure_range=(1.0, 1.0),
        )
        world = gen_world(spec)
        zero = self.zero_coefficients(spec.latent_dim)
        sev = {
            p: PerilCoefficients(
                intercept=0.5,
                cage_effects=tuple([0.0] * 15),
                roof=0.0,
                bage=0.0,
                limit=0.0,
                latent=tuple([0.0] * spec.latent_dim),
            )
            for p in PERILS
        }
        policy = gen_claims(world, seed=1, frequency=zero, severity=sev)
        mean = policy.counts["theft"].mean()
        assert mean == pytest.approx(1.0, abs=3.0 / np.sqrt(20_000))

    def test_null_world_counts_independent_of_latents(self):
        # With the latent term zeroed, two worlds that differ only in their
        # latent draws produce identical claims streams (holding the
        # ground-truth coefficients fixed): the embeddings carry no
        # information about the counts by construction.
        spec_a = default_spec(n_properties=400, d_feat=8, seed=9)
        a = gen_world(spec_a)
        b = gen_world(default_spec(n_properties=400, d_feat=8, seed=10))
        pa = gen_claims(a, signal_source="none", seed=3)
        pb = gen_claims(
            b,
            signal_source="none",
            seed=3,
            frequency=spec_a.frequency,
            severity=spec_a.severity,
        )
        assert not np.array_equal(a.latents, b.latents)
        for peril in PERILS:
            np.testing.assert_array_equal(pa.counts[peril], pb.counts[peril])
            np.testing.assert_array_equal(pa.losses[peril], pb.losses[peril])

    def test_signal_world_depends_on_latents(self):
        spec_a = default_spec(n_properties=400, d_feat=8, seed=9)
        a = gen_world(spec_a)
        b = gen_world(default_spec(n_properties=400, d_feat=8, seed=10))
        pa = gen_claims(a, signal_source="latent", seed=3)
        pb = gen_claims(
            b,
            signal_source="latent",
            seed=3,
            frequency=spec_a.frequency,
            severity=spec_a.severity,
        )
        assert any(
            not np.array_equal(pa.counts[p], pb.counts[p]) for p in PERILS
        )

    def test_nonpositive_severity_predictor_rejected(self):
        spec = default_spec(n_properties=100, d_feat=8, seed=11)
        world = gen_world(spec)
        bad = dict(spec.severity)
        bad["fire"] = PerilCoefficients(
            intercept=-1.0,
            cage_effects=tuple([0.0] * 15),
            roof=0.0,
            bage=0.0,
            limit=0.0,
            latent=tuple([0.0] * spec.latent_dim),
        )
        with pytest.raises(SchemaError, match="severity linear predictor"):
            gen_claims(world, seed=1, severity=bad)

    def test_exposures_within_unit_year(self):
        world = gen_world(default_spec(n_properties=200, d_feat=8, seed=12))
        policy = gen_claims(world, seed=4)
        assert policy.exposure.min() > 0
        assert policy.exposure.max() <= 1.0

    @pytest.mark.slow
    def test_coefficient_recovery_with_true_latents(self):
        # Fit the frequency model with the true latents as covariates; pooled
        # over (seed, coefficient) pairs, at least 99% of estimates must land
        # within 3 standard errors of the truth.  (Requiring every
        # coefficient of every seed inside 3 se would fail by chance alone:
        # 0.9973^21 is about 0.95 per seed.)
        from embedrate.evalharness import traditional_blocks
        from embedrate.ingest import TermBlock, build_design

        trials = 0
        hits = 0
        for seed in range(25):
            spec = default_spec(
                n_properties=12_500,
                d_feat=8,
                latent_dim=3,
                seed=seed,
                observations_per_property=4,
                latent_strength=0.4,
            )
            world = gen_world(spec)
            policy = gen_claims(world, signal_source="latent", seed=seed + 100)
            coefs = spec.frequency["water"]
            prop_index = {pid: i for i, pid in enumerate(world.property_id)}
            rows = np.array([prop_index[p] for p in policy.property_id])
            blocks = traditional_blocks(policy)
            blocks.append(
                TermBlock(
                    name="latent",
                    column_names=tuple(f"z{i}" for i in range(3)),
                    values=world.latents[rows],
                )
            )
            design = build_design(
                blocks,
                response=policy.counts["water"].astype(float),
                offset=np.log(policy.exposure),
            )
            fit = glm.fit_irls(glm.GlmSpec("poisson"), design)
            se = glm.standard_errors(fit)
            truth = np.concatenate(
                [
                    [coefs.intercept],
                    np.asarray(coefs.cage_effects[1:]),
                    [coefs.roof, coefs.bage, coefs.limit],
                    np.asarray(coefs.latent),
                ]
            )
            inside = np.abs(fit.coefficients - truth) <= 3.0 * se
            trials += inside.size
            hits += int(inside.sum())
        assert hits / trials >= 0.99


class TestOraclePoissonIntercept:
    def test_closed_form(self):
        assert oracle_poisson_intercept([1, 2, 3], [1, 1, 1]) == pytest.approx(
            np.log(2.0)
        )

    def test_single_point(self):
        assert oracle_poisson_intercept([4], [2]) == pytest.approx(np.log(2.0))

    def test_boundary_all_zero_counts(self):
        with pytest.warns(UserWarning, match="boundary"):
            assert oracle_poisson_intercept([0, 0], [1, 1]) == float("-inf")

    def test_all_zero_rejected(self):
        with pytest.raises(SchemaError):
            oracle_poisson_intercept([0, 0], [0, 0])


class TestFileEmission:
    def test_emitted_files_load_and_match(self, tmp_path):
        spec = default_spec(n_properties=150, d_feat=12, seed=13)
        paths = write_synthetic_dataset(tmp_path, spec, claims_seed=5)
        features = load_feature_table(paths["features"], backbone_name="synthnet")
        world = gen_world(spec)
        np.testing.assert_allclose(
            features.features, world.features.features, rtol=1e-10
        )
        assessment = load_assessment_table(paths["assessment"])
        np.testing.assert_allclose(assessment.land, world.assessment.land, rtol=1e-10)
        policy = load_policy_table(paths["policy"])
        expected = gen_claims(world, seed=5)
        for p in PERILS:
            np.testing.assert_array_equal(policy.counts[p], expected.counts[p])
