import numpy as np
import pytest

from embedrate.embeddings import EmbeddingSet, Provenance
from embedrate.errors import SchemaError
from embedrate.pca import (
    PcaEmbedder,
    correlation_matrix,
    cumulative_variance,
    decorrelate_embeddings,
    fit_pca,
    load_pca,
    reconstruct,
    save_pca,
    transform,
)


def embedding_set(vectors, **prov):
    vectors = np.asarray(vectors, dtype=float)
    defaults = dict(approach="frozen", backbone="bb", embedding_size=vectors.shape[1])
    defaults.update(prov)
    return EmbeddingSet(
        property_id=np.array([f"H{i}" for i in range(len(vectors))], dtype=object),
        vectors=vectors,
        provenance=Provenance(**defaults),
    )


class TestFitPca:
    def test_degenerate_line(self):
        t = np.linspace(-2, 2, 30)
        data = np.column_stack([t, t])
        with pytest.warns(UserWarning, match="rank"):
            model = fit_pca(data, 2)
        direction = np.array([1.0, 1.0]) / np.sqrt(2)
        np.testing.assert_allclose(model.components[0], direction, atol=1e-12)
        assert model.eigenvalues[1] == pytest.approx(0.0, abs=1e-12)
        assert model.rank_deficient

    def test_isotropic_variance_ratios(self):
        rng = np.random.default_rng(0)
        d = 6
        data = rng.standard_normal((100_000, d))
        model = fit_pca(data, d)
        ratios = model.eigenvalues / model.total_variance
        np.testing.assert_allclose(ratios, np.full(d, 1 / d), atol=0.02)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((40, 7)) @ rng.standard_normal((7, 7))
        model = fit_pca(data, 7)
        np.testing.assert_allclose(
            reconstruct(model, transform(model, data)), data, atol=1e-8
        )

    def test_orthonormal_and_variance_conserving(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((60, 9)) * rng.uniform(0.1, 3.0, 9)
        model = fit_pca(data, 9)
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(9), atol=1e-8)
        assert model.eigenvalues.sum() == pytest.approx(
            model.total_variance, abs=1e-8
        )

    def test_gram_side_matches_covariance_side(self):
        # d > n routes through the Gram matrix; spectra must agree
        rng = np.random.default_rng(3)
        data = rng.standard_normal((25, 60))
        model = fit_pca(data, 10)
        cov = np.cov(data, rowvar=False, ddof=1)
        reference = np.sort(np.linalg.eigvalsh(cov))[::-1][:10]
        np.testing.assert_allclose(model.eigenvalues, reference, atol=1e-8)
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(10), atol=1e-8)

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((50, 5))
        a = fit_pca(data, 5)
        b = fit_pca(data.copy(), 5)
        np.testing.assert_array_equal(a.components, b.components)
        for row in a.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_k_bounds(self):
        data = np.random.default_rng(5).standard_normal((10, 4))
        with pytest.raises(SchemaError):
            fit_pca(data, 5)
        with pytest.raises(SchemaError):
            fit_pca(data[:1], 1)


class TestTransform:
    def test_training_columns_uncorrelated(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((200, 8)) @ rng.standard_normal((8, 8))
        model = fit_pca(data, 8)
        scores = transform(model, data)
        cov = np.cov(scores, rowvar=False, ddof=1)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 1e-8

    def test_mean_row_maps_to_zero(self):
        rng = np.random.default_rng(7)
        data = rng.standard_normal((30, 4)) + 5.0
        model = fit_pca(data, 4)
        np.testing.assert_allclose(
            transform(model, data.mean(axis=0, keepdims=True)),
            np.zeros((1, 4)),
            atol=1e-10,
        )

    def test_width_mismatch(self):
        model = fit_pca(np.random.default_rng(8).standard_normal((10, 3)), 2)
        with pytest.raises(SchemaError, match="width"):
            transform(model, np.zeros((4, 5)))


class TestCumulativeVariance:
    def test_full_is_one(self):
        data = np.random.default_rng(9).standard_normal((40, 5))
        model = fit_pca(data, 5)
        assert cumulative_variance(model, 5) == pytest.approx(1.0, abs=1e-12)

    def test_arithmetic(self):
        model = fit_pca(
            np.random.default_rng(10).standard_normal((50, 2))
            * np.array([np.sqrt(3.0), 1.0]),
            2,
        )
        manual = model.eigenvalues[0] / model.eigenvalues.sum()
        assert cumulative_variance(model, 1) == pytest.approx(manual, abs=1e-12)

    def test_literal_eigenvalues(self):
        from embedrate.pca import PcaModel

        model = PcaModel(
            mean=np.zeros(2),
            components=np.eye(2),
            eigenvalues=np.array([3.0, 1.0]),
            total_variance=4.0,
        )
        assert cumulative_variance(model, 1) == pytest.approx(0.75)
        assert cumulative_variance(model, 2) == pytest.approx(1.0)

    def test_model_validation(self):
        from embedrate.pca import PcaModel

        with pytest.raises(SchemaError, match="nonincreasing"):
            PcaModel(
                mean=np.zeros(2),
                components=np.eye(2),
                eigenvalues=np.array([1.0, 3.0]),
                total_variance=4.0,
            )

    def test_marginal_gains_nonincreasing(self):
        data = np.random.default_rng(11).standard_normal((80, 6))
        model = fit_pca(data, 6)
        f = [cumulative_variance(model, k) for k in range(7)]
        gains = np.diff(f)
        assert np.all(np.diff(gains) <= 1e-12)


class TestDecorrelate:
    def test_output_uncorrelated(self):
        rng = np.random.default_rng(12)
        base = rng.standard_normal((300, 3))
        mixed = base @ rng.standard_normal((3, 6))[:3] + 0.01 * rng.standard_normal(
            (300, 6)
        )
        out = decorrelate_embeddings(embedding_set(mixed))
        corr = correlation_matrix(out)
        off = corr - np.diag(np.diag(corr))
        assert np.abs(off).max() < 1e-8
        assert out.provenance.decorrelated

    def test_idempotent_up_to_sign(self):
        rng = np.random.default_rng(13)
        data = rng.standard_normal((100, 4)) * np.array([3.0, 2.0, 1.0, 0.5])
        once = decorrelate_embeddings(embedding_set(data))
        twice = decorrelate_embeddings(once)
        ratio = np.sign(np.sum(once.vectors * twice.vectors, axis=0))
        np.testing.assert_allclose(
            twice.vectors, once.vectors * ratio, atol=1e-8
        )

    def test_span_preserved(self):
        rng = np.random.default_rng(14)
        data = rng.standard_normal((50, 5))
        rotated = decorrelate_embeddings(embedding_set(data)).vectors
        # project raw embeddings onto the rotated basis and back
        centered = data - data.mean(axis=0)
        coeffs, *_ = np.linalg.lstsq(rotated, centered, rcond=None)
        np.testing.assert_allclose(rotated @ coeffs, centered, atol=1e-8)

    def test_rank_deficient_warns_but_proceeds(self):
        rng = np.random.default_rng(15)
        col = rng.standard_normal(40)
        data = np.column_stack([col, col, rng.standard_normal(40)])
        with pytest.warns(UserWarning, match="rank"):
            out = decorrelate_embeddings(embedding_set(data))
        assert out.embedding_size == 3


class TestCorrelationMatrix:
    def test_duplicated_column(self):
        rng = np.random.default_rng(16)
        col = rng.standard_normal(50)
        corr = correlation_matrix(embedding_set(np.column_stack([col, col])))
        assert corr[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_independent_columns_near_zero(self):
        rng = np.random.default_rng(17)
        corr = correlation_matrix(embedding_set(rng.standard_normal((100_000, 4))))
        off = corr - np.diag(np.diag(corr))
        assert np.abs(off).max() < 0.02

    def test_zero_variance_marked_nan(self):
        data = np.column_stack([np.ones(20), np.arange(20.0)])
        corr = correlation_matrix(embedding_set(data))
        assert np.isnan(corr[0]).all() and np.isnan(corr[:, 0]).all()
        assert corr[1, 1] == pytest.approx(1.0)


class TestEmbedderAndSerialization:
    def test_estimator_api(self):
        from embedrate.ingest import FeatureMatrix

        rng = np.random.default_rng(18)
        features = FeatureMatrix(
            property_id=np.array([f"H{i}" for i in range(30)], dtype=object),
            features=rng.standard_normal((30, 6)),
            backbone_name="bb",
        )
        embedder = PcaEmbedder(n_components=3)
        assert embedder.get_params()["n_components"] == 3
        out = embedder.fit(features).embed(features)
        assert out.vectors.shape == (30, 3)
        assert out.provenance.approach == "pca"
        assert out.provenance.backbone == "bb"
        np.testing.assert_array_equal(
            embedder.transform(features.features), out.vectors
        )

    def test_save_load_round_trip(self, tmp_path):
        data = np.random.default_rng(19).standard_normal((25, 4))
        model = fit_pca(data, 3)
        path = tmp_path / "pca.npz"
        save_pca(path, model)
        again = load_pca(path)
        np.testing.assert_array_equal(again.components, model.components)
        np.testing.assert_array_equal(again.mean, model.mean)
        assert again.total_variance == model.total_variance
