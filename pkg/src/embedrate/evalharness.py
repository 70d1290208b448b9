"""Experiment grid over perils, embedding approaches, backbones and sizes.

For every cell the harness assembles a design with the traditional rating
variables (dummy-coded client-age bucket, roof age, building age, coverage
limit) plus an optional embedding block, fits the frequency or severity GLM
on the training split, and evaluates deviance on the test split together with
the embedding block's significant-coefficient count.  Embeddings are built
once per (approach, backbone, size) and reused across perils; the baseline is
fit once per (family, peril) and shared.

Failed fits (non-convergence, singular designs, missing embedding files) are
recorded as failed cells with their reason and the grid continues.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import glm
from .embeddings import EmbeddingSet
from .errors import (
    ConvergenceError,
    DesignError,
    SchemaError,
)
from .ingest import (
    CAGE_LEVELS,
    CAGE_REFERENCE_LEVEL,
    PERILS,
    DesignMatrix,
    PolicyTable,
    TermBlock,
    build_design,
    cap_severity,
    dummy_code,
    numeric_block,
    split_train_test,
)
from .pca import decorrelate_embeddings
from .represent import FrozenModel, forward
from .validation import as_float_vector

FREQUENCY_PERILS = PERILS + ("total",)
# Wind and hail have too few severity observations for separate models and
# are pooled at the response level.
SEVERITY_PERILS = ("theft", "other", "sbu", "water", "wind&hail", "fire", "total")
_SEVERITY_POOL = {"wind&hail": ("wind", "hail")}

DEFAULT_SEVERITY_CAP = 100_000.0
DEFAULT_ALPHA = 0.05

EMBEDDING_TERM = "embedding"

_CELL_ERRORS = (ConvergenceError, DesignError, SchemaError, ValueError)


@dataclass(frozen=True)
class ExperimentCell:
    """One grid cell: which model on which peril and family."""

    peril: str
    approach: str  # baseline | pca | frozen | fine-tuned
    backbone: str | None
    embedding_size: int | None
    family: str  # frequency | severity
    decorrelate: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("frequency", "severity"):
            raise SchemaError("family must be 'frequency' or 'severity'")
        if self.approach == "baseline":
            if self.backbone is not None or self.embedding_size is not None:
                raise SchemaError("baseline cells carry no backbone or size")
        elif self.approach not in ("pca", "frozen", "fine-tuned"):
            raise SchemaError(f"unknown approach {self.approach!r}")

    def label(self) -> str:
        if self.approach == "baseline":
            return "baseline"
        return f"{self.approach}:{self.backbone}:{self.embedding_size}"


@dataclass(frozen=True)
class CellResult:
    cell: ExperimentCell
    train_deviance: float | None
    test_deviance: float | None
    significant: int | None
    expected_significant: float | None
    converged: bool
    iterations: int | None
    error: str | None = None


@dataclass(frozen=True)
class RepresentationDiagnostics:
    """In-sample fit quality of one trained representation model."""

    backbone: str
    embedding_size: int
    final_loss: float
    confusion: tuple  # 3x3 column-normalized percentages
    rmse: dict  # task name -> RMSE in original units


@dataclass(frozen=True)
class VifRow:
    model: str
    term: str
    df: int
    gvif: float
    gvif_adjusted: float


@dataclass(frozen=True)
class ReportSet:
    cells: tuple[CellResult, ...]
    representation: tuple[RepresentationDiagnostics, ...] = ()
    vif: tuple[VifRow, ...] = ()


# ---------------------------------------------------------------------------
# design assembly
# ---------------------------------------------------------------------------


def traditional_blocks(policy: PolicyTable, rows=None) -> list[TermBlock]:
    """Dummy-coded cage plus the three numeric rating variables."""
    idx = slice(None) if rows is None else rows
    return [
        dummy_code(
            policy.cage[idx], CAGE_LEVELS, CAGE_REFERENCE_LEVEL, name="cage"
        ),
        numeric_block(policy.roof[idx], "roof"),
        numeric_block(policy.bage[idx], "bage"),
        numeric_block(policy.limit[idx], "limit"),
    ]


def _embedding_block(embeddings: EmbeddingSet, property_ids) -> TermBlock:
    vectors = embeddings.lookup(property_ids)
    return TermBlock(
        name=EMBEDDING_TERM,
        column_names=tuple(f"g{j}" for j in range(vectors.shape[1])),
        values=vectors,
    )


def frequency_design(
    policy: PolicyTable,
    peril: str,
    embeddings: EmbeddingSet | None = None,
    include_traditional: bool = True,
) -> DesignMatrix:
    """Counts response with a log-exposure offset."""
    if peril not in policy.counts:
        raise DesignError(f"unknown peril {peril!r}")
    blocks = traditional_blocks(policy) if include_traditional else []
    if embeddings is not None:
        blocks.append(_embedding_block(embeddings, policy.property_id))
    if not blocks:
        raise DesignError("a design needs the traditional block or embeddings")
    return build_design(
        blocks,
        response=policy.counts[peril].astype(np.float64),
        offset=np.log(policy.exposure),
    )


def severity_design(
    policy: PolicyTable,
    peril: str,
    embeddings: EmbeddingSet | None = None,
    cap: float = DEFAULT_SEVERITY_CAP,
    include_traditional: bool = True,
) -> DesignMatrix:
    """Capped positive losses as response, zero offset.

    Pooled perils (``wind&hail``) stack their positive-loss rows; an
    observation with claims for both perils contributes one row per peril.
    """
    perils = _SEVERITY_POOL.get(peril, (peril,))
    for p in perils:
        if p not in policy.losses:
            raise DesignError(f"unknown peril {p!r}")
    row_sets = [np.flatnonzero(policy.losses[p] > 0) for p in perils]
    if sum(len(r) for r in row_sets) == 0:
        raise DesignError(f"no positive-loss observations for peril {peril!r}")

    block_rows = []
    responses = []
    for p, rows in zip(perils, row_sets):
        if rows.size == 0:
            continue
        blocks = traditional_blocks(policy, rows) if include_traditional else []
        if embeddings is not None:
            blocks.append(
                _embedding_block(embeddings, policy.property_id[rows])
            )
        if not blocks:
            raise DesignError("a design needs the traditional block or embeddings")
        block_rows.append(blocks)
        responses.append(cap_severity(policy.losses[p][rows], cap))

    merged_blocks = []
    for i in range(len(block_rows[0])):
        merged_blocks.append(
            TermBlock(
                name=block_rows[0][i].name,
                column_names=block_rows[0][i].column_names,
                values=np.vstack([blocks[i].values for blocks in block_rows]),
            )
        )
    return build_design(merged_blocks, response=np.concatenate(responses))


# ---------------------------------------------------------------------------
# per-cell evaluation
# ---------------------------------------------------------------------------


def _fit_cell(
    cell: ExperimentCell,
    train: PolicyTable,
    test: PolicyTable,
    embeddings: EmbeddingSet | None,
    severity_cap: float,
    alpha: float,
    glm_spec_kwargs: dict,
) -> CellResult:
    try:
        if embeddings is not None and cell.decorrelate:
            embeddings = decorrelate_embeddings(embeddings)
        if cell.family == "frequency":
            spec = glm.GlmSpec(family="poisson", **glm_spec_kwargs)
            design_train = frequency_design(train, cell.peril, embeddings)
            design_test = frequency_design(test, cell.peril, embeddings)
        else:
            spec = glm.GlmSpec(family="gamma", **glm_spec_kwargs)
            design_train = severity_design(
                train, cell.peril, embeddings, cap=severity_cap
            )
            design_test = severity_design(
                test, cell.peril, embeddings, cap=severity_cap
            )
        fit = glm.fit_design(spec, design_train)
        mu_test = glm.predict(fit, design_test)
        test_deviance = glm.deviance(design_test.response, mu_test, spec.family)
        if embeddings is not None:
            significant, expected = glm.significant_count(
                fit, EMBEDDING_TERM, alpha=alpha
            )
        else:
            significant, expected = None, None
        return CellResult(
            cell=cell,
            train_deviance=fit.deviance,
            test_deviance=test_deviance,
            significant=significant,
            expected_significant=expected,
            converged=True,
            iterations=fit.iterations,
        )
    except _CELL_ERRORS as exc:
        return CellResult(
            cell=cell,
            train_deviance=None,
            test_deviance=None,
            significant=None,
            expected_significant=None,
            converged=False,
            iterations=None,
            error=f"{type(exc).__name__}: {exc}",
        )


def _vif_rows_for_design(label: str, design: DesignMatrix) -> tuple[VifRow, ...]:
    # Embedding columns are diagnosed one by one; cage stays grouped.
    terms = []
    for name, idx in design.terms:
        zero_based = tuple(i - 1 for i in idx)
        if name == EMBEDDING_TERM:
            for j, col in enumerate(zero_based):
                terms.append((f"g{j + 1}", (col,)))
        else:
            terms.append((name, zero_based))
    entries = glm.gvif(design.matrix[:, 1:], terms=terms)
    return tuple(
        VifRow(
            model=label,
            term=e.term,
            df=e.df,
            gvif=e.gvif,
            gvif_adjusted=e.gvif_adjusted,
        )
        for e in entries
    )


def run_grid(
    policy: PolicyTable,
    embedding_sets: dict,
    approaches=("pca", "frozen"),
    backbones=(),
    embedding_sizes=(8, 16, 32),
    perils: tuple[str, ...] | None = None,
    families=("frequency", "severity"),
    split_fraction: float = 0.9,
    split_seed: int = 0,
    group_key: str = "property_id",
    alpha: float = DEFAULT_ALPHA,
    severity_cap: float = DEFAULT_SEVERITY_CAP,
    decorrelate: bool = False,
    max_iterations: int = 100,
    tolerance: float = 1e-10,
    with_vif: bool = True,
) -> ReportSet:
    """Run the full grid and collect one result per cell.

    ``embedding_sets`` maps ``(approach, backbone, size)`` to an
    :class:`EmbeddingSet` or to ``None`` for sets that failed to resolve;
    missing or ``None`` entries mark their cells failed and the grid
    continues.  Results are a pure function of the inputs and seeds, so rerun
    reports are bit-identical.
    """
    train, test = split_train_test(policy, split_fraction, split_seed, group_key)
    glm_kwargs = {"max_iterations": max_iterations, "tolerance": tolerance}

    cells: list[CellResult] = []
    vif_rows: list[VifRow] = []
    for family in families:
        if perils is None:
            family_perils = (
                FREQUENCY_PERILS if family == "frequency" else SEVERITY_PERILS
            )
        else:
            family_perils = tuple(perils)
        for peril in family_perils:
            baseline = ExperimentCell(
                peril=peril,
                approach="baseline",
                backbone=None,
                embedding_size=None,
                family=family,
                seed=split_seed,
            )
            cells.append(
                _fit_cell(
                    baseline, train, test, None, severity_cap, alpha, glm_kwargs
                )
            )
            for approach in approaches:
                for backbone in backbones:
                    for size in embedding_sizes:
                        cell = ExperimentCell(
                            peril=peril,
                            approach=approach,
                            backbone=backbone,
                            embedding_size=size,
                            family=family,
                            decorrelate=decorrelate,
                            seed=split_seed,
                        )
                        embeddings = embedding_sets.get(
                            (approach, backbone, size)
                        )
                        if embeddings is None:
                            cells.append(
                                CellResult(
                                    cell=cell,
                                    train_deviance=None,
                                    test_deviance=None,
                                    significant=None,
                                    expected_significant=None,
                                    converged=False,
                                    iterations=None,
                                    error="missing embedding set",
                                )
                            )
                            continue
                        cells.append(
                            _fit_cell(
                                cell,
                                train,
                                test,
                                embeddings,
                                severity_cap,
                                alpha,
                                glm_kwargs,
                            )
                        )

    if with_vif:
        try:
            baseline_design = frequency_design(train, FREQUENCY_PERILS[0], None)
            vif_rows.extend(_vif_rows_for_design("baseline", baseline_design))
        except _CELL_ERRORS:
            pass
        for key in sorted(k for k, v in embedding_sets.items() if v is not None):
            approach, backbone, size = key
            embeddings = embedding_sets[key]
            if decorrelate:
                embeddings = decorrelate_embeddings(embeddings)
            label = f"{approach}:{backbone}:{size}"
            try:
                design = frequency_design(train, FREQUENCY_PERILS[0], embeddings)
                vif_rows.extend(_vif_rows_for_design(label, design))
                only = frequency_design(
                    train,
                    FREQUENCY_PERILS[0],
                    embeddings,
                    include_traditional=False,
                )
                vif_rows.extend(
                    _vif_rows_for_design(label + ":embedding-only", only)
                )
            except _CELL_ERRORS:
                continue

    return ReportSet(
        cells=tuple(cells),
        vif=tuple(vif_rows),
    )


# ---------------------------------------------------------------------------
# representation diagnostics
# ---------------------------------------------------------------------------


def confusion_matrix(true_classes, predicted_classes, k: int = 3) -> np.ndarray:
    """Column-normalized percentage matrix.

    Entry (i, j) is the percentage of true-class-j samples predicted as class
    i; labels run 1..k.  Columns with no samples are NaN markers.
    """
    t = np.asarray(true_classes)
    p = np.asarray(predicted_classes)
    if t.shape != p.shape:
        raise SchemaError("true and predicted classes must align")
    if t.size and (
        not np.all(np.isin(t, range(1, k + 1)))
        or not np.all(np.isin(p, range(1, k + 1)))
    ):
        raise SchemaError(f"labels must lie in 1..{k}")
    out = np.full((k, k), np.nan)
    for j in range(1, k + 1):
        col = t == j
        total = int(col.sum())
        if total == 0:
            continue
        for i in range(1, k + 1):
            out[i - 1, j - 1] = 100.0 * np.sum(col & (p == i)) / total
    return out


def rmse(predictions, targets) -> float:
    """Root mean squared error."""
    p = as_float_vector(predictions, "predictions")
    t = as_float_vector(targets, "targets")
    if p.size == 0 or p.shape != t.shape:
        raise SchemaError("predictions and targets must be nonempty and aligned")
    return float(np.sqrt(np.mean((p - t) ** 2)))


REGRESSION_TASK_NAMES = ("age", "log_land", "log_building", "log_total")


def representation_diagnostics(
    model: FrozenModel, features, tasks
) -> RepresentationDiagnostics:
    """Confusion matrix and per-task RMSE (in original units) for one model."""
    from .represent import _align_tasks  # aligned the same way training does

    aligned = _align_tasks(features, tasks)
    predictions, _ = forward(
        model.params, features.features, model.spec.negative_slope
    )
    regression = model.scaler.inverse_transform(predictions.regression)
    true_targets = aligned.regression_targets()
    rmse_by_task = {
        name: rmse(regression[:, i], true_targets[:, i])
        for i, name in enumerate(REGRESSION_TASK_NAMES)
    }
    predicted_class = np.argmax(predictions.class_probs, axis=1) + 1
    confusion = confusion_matrix(aligned.floor_class, predicted_class)
    return RepresentationDiagnostics(
        backbone=features.backbone_name,
        embedding_size=model.spec.embedding_size,
        final_loss=model.loss_trace[-1],
        confusion=tuple(tuple(row) for row in confusion),
        rmse=rmse_by_task,
    )


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def _format_cell(result: CellResult) -> str:
    if result.error is not None or result.test_deviance is None:
        return "NA"
    if result.significant is None:
        return f"{result.test_deviance:.2f}"
    return f"{result.test_deviance:.2f} ({result.significant})"


def _deviance_table(
    results: list[CellResult], family: str, approach: str, perils
) -> list[list[str]]:
    rows = [["model", "l"] + list(perils)]
    by_key = {}
    model_rows = []
    for r in results:
        if r.cell.family != family:
            continue
        if r.cell.approach == "baseline":
            by_key[("baseline", 0, r.cell.peril)] = r
            if ("baseline", 0) not in model_rows:
                model_rows.append(("baseline", 0))
        elif r.cell.approach == approach:
            key = (r.cell.backbone, r.cell.embedding_size)
            by_key[(key[0], key[1], r.cell.peril)] = r
            if key not in model_rows:
                model_rows.append(key)
    for model, size in model_rows:
        row = [model if model != "baseline" else "baseline", str(size)]
        for peril in perils:
            result = by_key.get((model, size, peril))
            row.append(_format_cell(result) if result else "")
        rows.append(row)
    return rows


def _write_csv(path: Path, rows: list[list[str]]) -> None:
    text = "\n".join(",".join(str(v) for v in cell) for cell in rows) + "\n"
    path.write_text(text)


def report_to_dict(report: ReportSet) -> dict:
    return {
        "cells": [asdict(c) for c in report.cells],
        "representation": [asdict(r) for r in report.representation],
        "vif": [asdict(v) for v in report.vif],
    }


def report_from_dict(data: dict) -> ReportSet:
    cells = []
    for c in data.get("cells", []):
        cell_info = dict(c["cell"])
        cells.append(
            CellResult(cell=ExperimentCell(**cell_info), **{
                k: v for k, v in c.items() if k != "cell"
            })
        )
    reps = []
    for r in data.get("representation", []):
        info = dict(r)
        info["confusion"] = tuple(tuple(row) for row in info["confusion"])
        reps.append(RepresentationDiagnostics(**info))
    vif = [VifRow(**v) for v in data.get("vif", [])]
    return ReportSet(cells=tuple(cells), representation=tuple(reps), vif=tuple(vif))


def save_report(path, report: ReportSet) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    )


def load_report(path) -> ReportSet:
    return report_from_dict(json.loads(Path(path).read_text()))


def emit_report(report: ReportSet, out_dir, approaches=None) -> list[Path]:
    """Write deviance tables (one per family and approach), representation
    diagnostics, VIF table and a machine-readable summary.

    Emission is a pure function of the report, so re-emitting without a refit
    produces byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = list(report.cells)
    if approaches is None:
        approaches = sorted(
            {r.cell.approach for r in results if r.cell.approach != "baseline"}
        )
    written = []

    for family, perils in (
        ("frequency", FREQUENCY_PERILS),
        ("severity", SEVERITY_PERILS),
    ):
        if results and not any(r.cell.family == family for r in results):
            continue
        seen = sorted(
            {r.cell.peril for r in results if r.cell.family == family},
            key=lambda p: perils.index(p) if p in perils else len(perils),
        )
        for approach in approaches:
            path = out / f"{family}_deviance_{approach}.csv"
            _write_csv(path, _deviance_table(results, family, approach, seen))
            written.append(path)

    if report.representation:
        path = out / "representation.csv"
        rows = [
            ["backbone", "l", "final_loss"]
            + [f"rmse_{t}" for t in REGRESSION_TASK_NAMES]
        ]
        for rep in report.representation:
            rows.append(
                [rep.backbone, str(rep.embedding_size), f"{rep.final_loss:.6f}"]
                + [f"{rep.rmse[t]:.6f}" for t in REGRESSION_TASK_NAMES]
            )
        _write_csv(path, rows)
        written.append(path)
        for rep in report.representation:
            path = out / f"confusion_{rep.backbone}_{rep.embedding_size}.csv"
            rows = [["true_1", "true_2", "true_3plus"]]
            for row in rep.confusion:
                rows.append(
                    ["NA" if np.isnan(v) else f"{v:.2f}" for v in row]
                )
            _write_csv(path, rows)
            written.append(path)

    if report.vif:
        path = out / "vif.csv"
        rows = [["model", "term", "df", "gvif", "gvif_adj"]]
        for v in report.vif:
            rows.append(
                [v.model, v.term, str(v.df), f"{v.gvif:.4f}", f"{v.gvif_adjusted:.4f}"]
            )
        _write_csv(path, rows)
        written.append(path)

    summary = out / "summary.json"
    summary.write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    )
    written.append(summary)
    return written
