"""Principal component analysis for the basic embedding approach.

Centered PCA via eigendecomposition of the sample covariance (divisor n - 1),
with a deterministic sign convention so embeddings reproduce bit-for-bit
across runs.  When the feature dimension exceeds the sample count the
decomposition runs on the n x n Gram matrix instead, which is the cheap side
for wide backbone feature spaces.

Also provides full-rank decorrelation of learned embeddings: replacing an
embedding block with all of its principal components removes linear
correlation without changing the block's span.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .embeddings import EmbeddingSet, Provenance
from .errors import SchemaError
from .ingest import FeatureMatrix
from .validation import as_float_matrix

_EIG_CLAMP = -1e-10  # eigenvalues this slightly negative are numerical zeros


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA: mean, orthonormal components (rows), eigenvalues.

    ``eigenvalues`` covers the retained components in nonincreasing order;
    ``total_variance`` is the trace of the sample covariance, so explained
    fractions never require the full spectrum.
    """

    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), orthonormal rows
    eigenvalues: np.ndarray  # (k,), nonincreasing, >= 0
    total_variance: float
    rank_deficient: bool = False

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        comps = as_float_matrix(self.components, "components")
        eig = np.asarray(self.eigenvalues, dtype=np.float64)
        if comps.shape[1] != mean.shape[0]:
            raise SchemaError("components width does not match mean length")
        if eig.shape[0] != comps.shape[0]:
            raise SchemaError("one eigenvalue per component is required")
        if np.any(eig < _EIG_CLAMP):
            raise SchemaError("eigenvalues must be nonnegative (within tolerance)")
        if np.any(np.diff(eig) > 1e-10):
            raise SchemaError("eigenvalues must be nonincreasing")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "eigenvalues", np.maximum(eig, 0.0))

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each component so its largest-magnitude loading is positive."""
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def _orthonormal_padding(existing: np.ndarray, count: int, dim: int) -> np.ndarray:
    """Deterministic orthonormal directions completing a component basis."""
    rng = np.random.default_rng(0)
    basis = [existing[i] for i in range(existing.shape[0])]
    pads = []
    while len(pads) < count:
        v = rng.standard_normal(dim)
        for b in basis:
            v -= (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            v /= norm
            basis.append(v)
            pads.append(v)
    return np.vstack(pads)


def fit_pca(matrix, k: int) -> PcaModel:
    """Fit centered PCA retaining ``k`` components.

    Requires at least two rows and ``k <= min(n, d)``.  If ``k`` exceeds the
    rank of the data, the missing directions are padded with zero-eigenvalue
    components and the model is flagged rank deficient.
    """
    x = as_float_matrix(matrix, "matrix")
    n, d = x.shape
    if n < 2:
        raise SchemaError("PCA requires at least 2 rows")
    if not 1 <= k <= min(n, d):
        raise SchemaError(f"k must lie in [1, min(n, d)] = [1, {min(n, d)}]")
    mean = x.mean(axis=0)
    xc = x - mean
    total_variance = float(np.sum(xc * xc)) / (n - 1)

    if d <= n:
        cov = (xc.T @ xc) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.maximum(eigvals[order], 0.0)
        components = eigvecs[:, order].T  # (d, d) rows
        tol = max(eigvals[0], 0.0) * d * np.finfo(np.float64).eps
        rank = int(np.sum(eigvals > tol))
        components = components[:k]
        eigvals = eigvals[:k]
    else:
        gram = (xc @ xc.T) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.maximum(eigvals[order], 0.0)
        eigvecs = eigvecs[:, order]
        tol = max(eigvals[0], 0.0) * n * np.finfo(np.float64).eps
        rank = int(np.sum(eigvals > tol))
        usable = min(k, rank)
        components = (xc.T @ eigvecs[:, :usable]).T
        components /= np.sqrt((n - 1) * eigvals[:usable])[:, None]
        if usable < k:
            components = np.vstack(
                [components, _orthonormal_padding(components, k - usable, d)]
            )
        eigvals = np.concatenate([eigvals[:usable], np.zeros(k - usable)])

    rank_deficient = k > rank
    if rank_deficient:
        warnings.warn(
            f"requested {k} components but data rank is {rank}; "
            "padding with zero-eigenvalue directions"
        )
    return PcaModel(
        mean=mean,
        components=_fix_signs(components),
        eigenvalues=eigvals,
        total_variance=total_variance,
        rank_deficient=rank_deficient,
    )


def transform(model: PcaModel, matrix) -> np.ndarray:
    """Project rows onto the retained components: ``(x - mean) @ C.T``."""
    x = as_float_matrix(matrix, "matrix")
    if x.shape[1] != model.input_dim:
        raise SchemaError(
            f"matrix width {x.shape[1]} does not match model input "
            f"dimension {model.input_dim}"
        )
    return (x - model.mean) @ model.components.T


def reconstruct(model: PcaModel, scores) -> np.ndarray:
    """Map component scores back to the original space."""
    scores = as_float_matrix(scores, "scores")
    if scores.shape[1] != model.k:
        raise SchemaError("scores width does not match retained components")
    return scores @ model.components + model.mean


def cumulative_variance(model: PcaModel, k: int) -> float:
    """Fraction of total variance captured by the first ``k`` components."""
    if not 0 <= k <= model.k:
        raise SchemaError(f"k must lie in [0, {model.k}]")
    if model.total_variance == 0:
        return 1.0
    return float(np.sum(model.eigenvalues[:k])) / model.total_variance


def decorrelate_embeddings(embeddings: EmbeddingSet) -> EmbeddingSet:
    """Rotate an embedding block onto all of its principal components.

    The output columns are linearly uncorrelated and span the same space as
    the input, so downstream model fits are unchanged while collinearity
    diagnostics become readable.
    """
    size = embeddings.embedding_size
    if size < 1:
        raise SchemaError("embedding size must be at least 1")
    model = fit_pca(embeddings.vectors, k=size)
    rotated = transform(model, embeddings.vectors)
    return embeddings.with_vectors(rotated, decorrelated=True)


def correlation_matrix(embeddings: EmbeddingSet) -> np.ndarray:
    """Pearson correlations between embedding dimensions.

    Zero-variance columns yield NaN markers across their row and column.
    """
    x = embeddings.vectors
    n, size = x.shape
    if n < 2:
        raise SchemaError("correlation requires at least 2 rows")
    xc = x - x.mean(axis=0)
    sd = np.sqrt(np.sum(xc * xc, axis=0))
    out = np.full((size, size), np.nan)
    valid = sd > 0
    if valid.any():
        z = xc[:, valid] / sd[valid]
        sub = z.T @ z
        np.fill_diagonal(sub, 1.0)
        out[np.ix_(valid, valid)] = sub
    return out


# ---------------------------------------------------------------------------
# estimator wrapper and serialization
# ---------------------------------------------------------------------------


class PcaEmbedder(BaseEstimator, TransformerMixin):
    """Project backbone feature vectors onto principal components.

    Parameters
    ----------
    n_components : int
        Embedding size to retain.
    """

    def __init__(self, n_components: int = 8):
        self.n_components = n_components

    def fit(self, X, y=None):
        matrix = X.features if isinstance(X, FeatureMatrix) else X
        self.model_ = fit_pca(matrix, k=self.n_components)
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        matrix = X.features if isinstance(X, FeatureMatrix) else X
        return transform(self.model_, matrix)

    def embed(self, features: FeatureMatrix) -> EmbeddingSet:
        """Transform a feature matrix into an embedding set with provenance."""
        self._check_fitted()
        return EmbeddingSet(
            property_id=features.property_id,
            vectors=transform(self.model_, features.features),
            provenance=Provenance(
                approach="pca",
                backbone=features.backbone_name,
                embedding_size=self.n_components,
            ),
        )

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("PcaEmbedder is not fitted; call fit first")


_PCA_FORMAT_VERSION = 1


def save_pca(path, model: PcaModel) -> None:
    """Serialize a PCA model to a versioned binary file."""
    np.savez(
        path,
        format_version=_PCA_FORMAT_VERSION,
        mean=model.mean,
        components=model.components,
        eigenvalues=model.eigenvalues,
        total_variance=model.total_variance,
        rank_deficient=model.rank_deficient,
    )


def load_pca(path) -> PcaModel:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != _PCA_FORMAT_VERSION:
            raise SchemaError(f"unsupported PCA model format version {version}")
        return PcaModel(
            mean=data["mean"],
            components=data["components"],
            eigenvalues=data["eigenvalues"],
            total_variance=float(data["total_variance"]),
            rank_deficient=bool(data["rank_deficient"]),
        )
