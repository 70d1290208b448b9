"""Multi-task representation model over precomputed backbone features.

A three-layer fully-connected network maps a feature vector (the flattened
backbone feature map) down to 128 units, then to the embedding size, then to
the seven related-task outputs: four regression targets (age and the three
log values) and a three-class storey classifier.  The post-activation values
of the embedding-sized layer are the image embedding.

The network trains with plain mini-batch gradient descent under a step-decay
schedule; gradients are exact analytic backpropagation (no autodiff), which
keeps the whole path verifiable against finite differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .embeddings import EmbeddingSet, Provenance
from .errors import ConvergenceError, NumericalError, SchemaError
from .ingest import FeatureMatrix, TaskTable
from .validation import as_float_matrix

N_REGRESSION = 4
N_CLASSES = 3
OUTPUT_SIZE = N_REGRESSION + N_CLASSES

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes and activation slope for the representation network."""

    d_feat: int
    embedding_size: int
    hidden1: int = 128
    output_size: int = OUTPUT_SIZE
    negative_slope: float = 0.1

    def __post_init__(self):
        if min(self.d_feat, self.hidden1, self.embedding_size) < 1:
            raise SchemaError("layer sizes must be positive")
        if not self.embedding_size < self.hidden1 < self.d_feat:
            raise SchemaError(
                "layer sizes must satisfy embedding_size < hidden1 < d_feat, got "
                f"{self.embedding_size} / {self.hidden1} / {self.d_feat}"
            )
        if self.output_size != OUTPUT_SIZE:
            raise SchemaError(f"output size must be {OUTPUT_SIZE}")

    @property
    def parameter_count(self) -> int:
        return (
            self.d_feat * self.hidden1
            + self.hidden1
            + self.hidden1 * self.embedding_size
            + self.embedding_size
            + self.embedding_size * self.output_size
            + self.output_size
        )


@dataclass(frozen=True)
class MlpParams:
    """Weights and biases for the three fully-connected layers."""

    w1: np.ndarray  # (d_feat, hidden1)
    b1: np.ndarray
    w2: np.ndarray  # (hidden1, embedding_size)
    b2: np.ndarray
    w3: np.ndarray  # (embedding_size, output_size)
    b3: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"parameter {name} contains non-finite values")
            object.__setattr__(self, name, arr)
        chain = (
            (self.w1.shape[1], self.b1.shape[0]),
            (self.w1.shape[1], self.w2.shape[0]),
            (self.w2.shape[1], self.b2.shape[0]),
            (self.w2.shape[1], self.w3.shape[0]),
            (self.w3.shape[1], self.b3.shape[0]),
        )
        if any(a != b for a, b in chain):
            raise SchemaError("parameter shapes are inconsistent")

    def tensors(self):
        return (
            ("w1", self.w1), ("b1", self.b1),
            ("w2", self.w2), ("b2", self.b2),
            ("w3", self.w3), ("b3", self.b3),
        )


@dataclass(frozen=True)
class TaskPredictions:
    """Regression outputs plus normalized storey-class probabilities."""

    regression: np.ndarray  # (n, 4)
    class_probs: np.ndarray  # (n, 3), rows sum to 1


@dataclass(frozen=True)
class TrainSchedule:
    """Step-decay schedule: the learning rate drops by ``decay_factor``
    every ``decay_every`` epochs, starting from ``initial_lr``."""

    epochs: int = 25
    initial_lr: float = 1e-4
    decay_factor: float = 0.1
    decay_every: int = 5
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.decay_every < 1:
            raise SchemaError("epochs, batch_size and decay_every must be >= 1")
        if self.initial_lr <= 0:
            raise SchemaError("initial_lr must be positive")

    def learning_rate(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        if not 1 <= epoch <= self.epochs:
            raise ValueError(f"epoch must lie in [1, {self.epochs}]")
        return self.initial_lr * self.decay_factor ** ((epoch - 1) // self.decay_every)


@dataclass(frozen=True)
class TargetScaler:
    """Standardization of the regression targets, with inverse transform.

    The four regression tasks mix year counts with log currency; equal loss
    weighting is only meaningful once each target has unit variance on the
    training data.
    """

    mean: np.ndarray  # (4,)
    scale: np.ndarray  # (4,), zero-variance targets keep scale 1

    @classmethod
    def fit(cls, regression_targets) -> "TargetScaler":
        y = as_float_matrix(regression_targets, "regression_targets")
        mean = y.mean(axis=0)
        scale = y.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    def transform(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.scale

    def inverse_transform(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.scale + self.mean


def leaky_relu(x, negative_slope: float = 0.1) -> np.ndarray:
    """max(0, x) - negative_slope * min(0, x)."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, negative_slope * x)


def _leaky_grad(pre, negative_slope: float) -> np.ndarray:
    return np.where(pre > 0, 1.0, negative_slope)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """Xavier-uniform weights (gain 1), biases exactly zero, seeded."""
    rng = np.random.default_rng(seed)

    def layer(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return MlpParams(
        w1=layer(spec.d_feat, spec.hidden1),
        b1=np.zeros(spec.hidden1),
        w2=layer(spec.hidden1, spec.embedding_size),
        b2=np.zeros(spec.embedding_size),
        w3=layer(spec.embedding_size, spec.output_size),
        b3=np.zeros(spec.output_size),
    )


def _forward_pass(params: MlpParams, x: np.ndarray, negative_slope: float):
    pre1 = x @ params.w1 + params.b1
    h1 = leaky_relu(pre1, negative_slope)
    pre2 = h1 @ params.w2 + params.b2
    emb = leaky_relu(pre2, negative_slope)
    out = emb @ params.w3 + params.b3
    return pre1, h1, pre2, emb, out


def forward(
    params: MlpParams, feature_batch, negative_slope: float = 0.1
) -> tuple[TaskPredictions, np.ndarray]:
    """Run the network; returns predictions and the embedding activations."""
    x = as_float_matrix(feature_batch, "feature_batch", require_finite=False)
    if not np.all(np.isfinite(x)):
        raise NumericalError("feature batch contains non-finite values")
    if x.shape[1] != params.w1.shape[0]:
        raise SchemaError(
            f"batch width {x.shape[1]} does not match d_feat {params.w1.shape[0]}"
        )
    _, _, _, emb, out = _forward_pass(params, x, negative_slope)
    return (
        TaskPredictions(
            regression=out[:, :N_REGRESSION],
            class_probs=_softmax(out[:, N_REGRESSION:]),
        ),
        emb,
    )


def multitask_loss(predictions: TaskPredictions, targets) -> float:
    """Batch-mean of squared regression error plus class cross-entropy.

    ``targets`` is an (n, 7) matrix: four (standardized) regression targets
    followed by the one-hot storey class.
    """
    t = as_float_matrix(targets, "targets")
    if t.shape[1] != OUTPUT_SIZE:
        raise SchemaError(f"targets must have {OUTPUT_SIZE} columns")
    reg = predictions.regression
    probs = predictions.class_probs
    if reg.shape[0] != t.shape[0]:
        raise SchemaError("predictions and targets have different lengths")
    sq = np.sum((t[:, :N_REGRESSION] - reg) ** 2)
    p_true = np.sum(probs * t[:, N_REGRESSION:], axis=1)
    if np.any(p_true < _LOG_FLOOR):
        warnings.warn("true-class probability underflow; clamping log argument")
        p_true = np.maximum(p_true, _LOG_FLOOR)
    ce = -np.sum(np.log(p_true))
    return float((sq + ce) / t.shape[0])


def _loss_and_gradients(
    params: MlpParams, x: np.ndarray, targets: np.ndarray, negative_slope: float
) -> tuple[float, MlpParams]:
    n = x.shape[0]
    pre1, h1, pre2, emb, out = _forward_pass(params, x, negative_slope)
    for layer_index, arr in enumerate((pre1, pre2, out), start=1):
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite activations at layer {layer_index}")
    probs = _softmax(out[:, N_REGRESSION:])
    predictions = TaskPredictions(regression=out[:, :N_REGRESSION], class_probs=probs)
    loss = multitask_loss(predictions, targets)

    d_out = np.empty_like(out)
    d_out[:, :N_REGRESSION] = 2.0 * (out[:, :N_REGRESSION] - targets[:, :N_REGRESSION]) / n
    d_out[:, N_REGRESSION:] = (probs - targets[:, N_REGRESSION:]) / n

    d_emb = d_out @ params.w3.T
    d_pre2 = d_emb * _leaky_grad(pre2, negative_slope)
    d_h1 = d_pre2 @ params.w2.T
    d_pre1 = d_h1 * _leaky_grad(pre1, negative_slope)

    grads = MlpParams(
        w1=x.T @ d_pre1,
        b1=d_pre1.sum(axis=0),
        w2=h1.T @ d_pre2,
        b2=d_pre2.sum(axis=0),
        w3=emb.T @ d_out,
        b3=d_out.sum(axis=0),
    )
    return loss, grads


def gradients(
    params: MlpParams, feature_batch, targets, negative_slope: float = 0.1
) -> MlpParams:
    """Exact analytic gradients of :func:`multitask_loss` w.r.t. every parameter."""
    x = as_float_matrix(feature_batch, "feature_batch")
    t = as_float_matrix(targets, "targets")
    _, grads = _loss_and_gradients(params, x, t, negative_slope)
    return grads


@dataclass(frozen=True)
class FrozenModel:
    """A trained representation: spec, parameters, target scaling, trace."""

    spec: MlpSpec
    params: MlpParams
    scaler: TargetScaler
    schedule: TrainSchedule
    loss_trace: tuple[float, ...]


def _align_tasks(features: FeatureMatrix, tasks: TaskTable) -> TaskTable:
    index = {pid: i for i, pid in enumerate(tasks.property_id)}
    missing = [pid for pid in features.property_id if pid not in index]
    if missing:
        raise SchemaError(
            f"no task targets for property id(s): {', '.join(missing[:5])}"
        )
    order = np.fromiter(
        (index[pid] for pid in features.property_id),
        dtype=np.intp,
        count=features.n,
    )
    return TaskTable(
        property_id=tasks.property_id[order],
        age=tasks.age[order],
        log_land=tasks.log_land[order],
        log_building=tasks.log_building[order],
        log_total=tasks.log_total[order],
        floor_class=tasks.floor_class[order],
    )


def train(
    spec: MlpSpec,
    schedule: TrainSchedule,
    features: FeatureMatrix,
    tasks: TaskTable,
) -> FrozenModel:
    """Mini-batch gradient descent under the step-decay schedule.

    Rows are reshuffled every epoch with a seed derived from
    ``(schedule.seed, epoch)``, so a fixed (seed, data, schedule) triple yields
    a bit-identical model.  The returned loss trace holds the per-epoch mean
    of the per-sample loss.
    """
    if features.d_feat != spec.d_feat:
        raise SchemaError(
            f"features have d_feat={features.d_feat}, spec expects {spec.d_feat}"
        )
    aligned = _align_tasks(features, tasks)
    return _train_on_matrix(
        spec,
        schedule,
        features.features,
        aligned.regression_targets(),
        aligned.class_one_hot(),
    )


def _train_on_matrix(
    spec: MlpSpec,
    schedule: TrainSchedule,
    x: np.ndarray,
    regression_targets: np.ndarray,
    class_one_hot: np.ndarray,
) -> FrozenModel:
    scaler = TargetScaler.fit(regression_targets)
    targets = np.hstack([scaler.transform(regression_targets), class_one_hot])

    params = init_params(spec, schedule.seed)
    n = x.shape[0]
    trace = []
    for epoch in range(1, schedule.epochs + 1):
        lr = schedule.learning_rate(epoch)
        perm = np.random.default_rng([schedule.seed, epoch]).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, schedule.batch_size):
            batch = perm[start : start + schedule.batch_size]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = _loss_and_gradients(
                        params, x[batch], targets[batch], spec.negative_slope
                    )
            except (NumericalError, SchemaError) as exc:
                raise ConvergenceError(
                    f"training diverged at epoch {epoch}", trace=trace
                ) from exc
            if not np.isfinite(loss):
                raise ConvergenceError(
                    f"training diverged at epoch {epoch}", trace=trace
                )
            epoch_loss += loss * len(batch)
            params = MlpParams(
                w1=params.w1 - lr * grads.w1,
                b1=params.b1 - lr * grads.b1,
                w2=params.w2 - lr * grads.w2,
                b2=params.b2 - lr * grads.b2,
                w3=params.w3 - lr * grads.w3,
                b3=params.b3 - lr * grads.b3,
            )
        trace.append(epoch_loss / n)
    return FrozenModel(
        spec=spec,
        params=params,
        scaler=scaler,
        schedule=schedule,
        loss_trace=tuple(trace),
    )


def extract_embeddings(model: FrozenModel, features: FeatureMatrix) -> EmbeddingSet:
    """One embedding vector per property, with provenance recorded."""
    if features.d_feat != model.spec.d_feat:
        raise SchemaError(
            f"features have d_feat={features.d_feat}, model expects "
            f"{model.spec.d_feat}"
        )
    _, emb = forward(model.params, features.features, model.spec.negative_slope)
    return EmbeddingSet(
        property_id=features.property_id,
        vectors=emb,
        provenance=Provenance(
            approach="frozen",
            backbone=features.backbone_name,
            embedding_size=model.spec.embedding_size,
            seed=model.schedule.seed,
        ),
    )


# ---------------------------------------------------------------------------
# serialization and estimator wrapper
# ---------------------------------------------------------------------------

_MLP_FORMAT_VERSION = 1


def save_model(path, model: FrozenModel) -> None:
    """Serialize a trained model with its spec header to a versioned file."""
    np.savez(
        path,
        format_version=_MLP_FORMAT_VERSION,
        d_feat=model.spec.d_feat,
        hidden1=model.spec.hidden1,
        embedding_size=model.spec.embedding_size,
        output_size=model.spec.output_size,
        negative_slope=model.spec.negative_slope,
        epochs=model.schedule.epochs,
        initial_lr=model.schedule.initial_lr,
        decay_factor=model.schedule.decay_factor,
        decay_every=model.schedule.decay_every,
        batch_size=model.schedule.batch_size,
        seed=model.schedule.seed,
        scaler_mean=model.scaler.mean,
        scaler_scale=model.scaler.scale,
        loss_trace=np.asarray(model.loss_trace),
        **{name: value for name, value in model.params.tensors()},
    )


def load_model(path) -> FrozenModel:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != _MLP_FORMAT_VERSION:
            raise SchemaError(f"unsupported model format version {version}")
        spec = MlpSpec(
            d_feat=int(data["d_feat"]),
            embedding_size=int(data["embedding_size"]),
            hidden1=int(data["hidden1"]),
            output_size=int(data["output_size"]),
            negative_slope=float(data["negative_slope"]),
        )
        schedule = TrainSchedule(
            epochs=int(data["epochs"]),
            initial_lr=float(data["initial_lr"]),
            decay_factor=float(data["decay_factor"]),
            decay_every=int(data["decay_every"]),
            batch_size=int(data["batch_size"]),
            seed=int(data["seed"]),
        )
        params = MlpParams(
            **{name: data[name] for name in ("w1", "b1", "w2", "b2", "w3", "b3")}
        )
        return FrozenModel(
            spec=spec,
            params=params,
            scaler=TargetScaler(
                mean=data["scaler_mean"], scale=data["scaler_scale"]
            ),
            schedule=schedule,
            loss_trace=tuple(float(v) for v in data["loss_trace"]),
        )


class FrozenEmbedder(BaseEstimator, TransformerMixin):
    """Train the representation network on related tasks, then embed.

    ``fit`` accepts either a :class:`FeatureMatrix` with a :class:`TaskTable`
    (aligned by property id) or plain arrays: X of shape (n, d_feat) and y of
    shape (n, 7) holding four regression targets and a one-hot class block.
    """

    def __init__(
        self,
        embedding_size: int = 8,
        hidden1: int = 128,
        epochs: int = 25,
        initial_lr: float = 1e-4,
        decay_factor: float = 0.1,
        decay_every: int = 5,
        batch_size: int = 128,
        seed: int = 0,
        negative_slope: float = 0.1,
    ):
        self.embedding_size = embedding_size
        self.hidden1 = hidden1
        self.epochs = epochs
        self.initial_lr = initial_lr
        self.decay_factor = decay_factor
        self.decay_every = decay_every
        self.batch_size = batch_size
        self.seed = seed
        self.negative_slope = negative_slope

    def _schedule(self) -> TrainSchedule:
        return TrainSchedule(
            epochs=self.epochs,
            initial_lr=self.initial_lr,
            decay_factor=self.decay_factor,
            decay_every=self.decay_every,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def fit(self, X, y):
        if isinstance(X, FeatureMatrix):
            features = X
        else:
            matrix = as_float_matrix(X, "X")
            features = FeatureMatrix(
                property_id=np.array([f"r{i}" for i in range(matrix.shape[0])]),
                features=matrix,
            )
        spec = MlpSpec(
            d_feat=features.d_feat,
            embedding_size=self.embedding_size,
            hidden1=self.hidden1,
            negative_slope=self.negative_slope,
        )
        if isinstance(y, TaskTable):
            self.model_ = train(spec, self._schedule(), features, y)
            return self
        t = as_float_matrix(y, "y")
        if t.shape[1] != OUTPUT_SIZE:
            raise SchemaError(f"y must have {OUTPUT_SIZE} columns")
        one_hot = t[:, N_REGRESSION:]
        if not (
            np.all(np.isin(one_hot, (0.0, 1.0)))
            and np.all(one_hot.sum(axis=1) == 1.0)
        ):
            raise SchemaError("columns 4..6 of y must be a one-hot class block")
        self.model_ = _train_on_matrix(
            spec, self._schedule(), features.features, t[:, :N_REGRESSION], one_hot
        )
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        matrix = X.features if isinstance(X, FeatureMatrix) else X
        _, emb = forward(
            self.model_.params, matrix, self.model_.spec.negative_slope
        )
        return emb

    def embed(self, features: FeatureMatrix) -> EmbeddingSet:
        self._check_fitted()
        return extract_embeddings(self.model_, features)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("FrozenEmbedder is not fitted; call fit first")
