"""Image-embedding construction and GLM ratemaking with full diagnostics."""

from .embeddings import EmbeddingSet, Provenance, read_embeddings, write_embeddings
from .errors import (
    ConvergenceError,
    DesignError,
    NumericalError,
    SchemaError,
    SingularDesignError,
)
from .glm import (
    FitDiagnostics,
    GlmFit,
    GlmRegressor,
    GlmSpec,
    GvifEntry,
    deviance,
    diagnose,
    fit_irls,
    gvif,
    predict,
    significant_count,
    wald_p_values,
)
from .ingest import (
    AssessmentTable,
    DesignMatrix,
    FeatureMatrix,
    PolicyTable,
    TaskTable,
    cap_severity,
    derive_task_targets,
    dummy_code,
    load_assessment_table,
    load_feature_table,
    load_policy_table,
    split_train_test,
)
from .pca import PcaEmbedder, PcaModel, decorrelate_embeddings, fit_pca
from .represent import (
    FrozenEmbedder,
    FrozenModel,
    MlpParams,
    MlpSpec,
    TrainSchedule,
    extract_embeddings,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AssessmentTable",
    "ConvergenceError",
    "DesignError",
    "DesignMatrix",
    "EmbeddingSet",
    "FeatureMatrix",
    "FitDiagnostics",
    "FrozenEmbedder",
    "FrozenModel",
    "GlmFit",
    "GlmRegressor",
    "GlmSpec",
    "GvifEntry",
    "MlpParams",
    "MlpSpec",
    "NumericalError",
    "PcaEmbedder",
    "PcaModel",
    "PolicyTable",
    "Provenance",
    "SchemaError",
    "SingularDesignError",
    "TaskTable",
    "TrainSchedule",
    "cap_severity",
    "decorrelate_embeddings",
    "derive_task_targets",
    "deviance",
    "diagnose",
    "dummy_code",
    "extract_embeddings",
    "fit_irls",
    "fit_pca",
    "gvif",
    "load_assessment_table",
    "load_feature_table",
    "load_policy_table",
    "predict",
    "read_embeddings",
    "significant_count",
    "split_train_test",
    "train",
    "wald_p_values",
    "write_embeddings",
]
