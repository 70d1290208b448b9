"""Tabular inputs: feature matrices, assessment data, policy data.

Three comma-separated file formats with mandatory headers feed the pipeline:

* feature file:    ``id,f0,...,f{d-1}``
* assessment file: ``id,year,floors,land,building,total``
* policy file:     ``obs_id,prop_id,exposure,cage,roof,bage,limit,
  <peril>_count,<peril>_loss,...`` for the seven perils in :data:`PERILS`

Lines starting with ``#`` are treated as comments.  All loaders validate
against their schema and raise :class:`~embedrate.errors.SchemaError` with the
offending row/column named.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DesignError, SchemaError
from .validation import (
    as_float_vector,
    check_same_length,
    check_unique_ids,
)

PERILS = ("theft", "other", "water", "wind", "hail", "sbu", "fire")
ALL_PERILS = PERILS + ("total",)

CAGE_LEVELS = tuple(range(1, 16))
CAGE_REFERENCE_LEVEL = 1

FLOOR_CLASS_LABELS = ("1", "2", "3+")


# ---------------------------------------------------------------------------
# domain tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows of backbone feature vectors keyed by property id."""

    property_id: np.ndarray  # (n,) str
    features: np.ndarray  # (n, d_feat) float64
    backbone_name: str = "unknown"

    def __post_init__(self):
        ids = check_unique_ids(self.property_id, "property_id")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise SchemaError(f"features must be 2-D, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise SchemaError("features contain non-finite values")
        check_same_length(("property_id", ids), ("features", feats))
        object.__setattr__(self, "property_id", ids.astype(str))
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_feat(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class AssessmentTable:
    """Raw property assessment rows; missing cells are NaN."""

    property_id: np.ndarray
    year: np.ndarray
    floors: np.ndarray
    land: np.ndarray
    building: np.ndarray
    total: np.ndarray

    def __post_init__(self):
        ids = check_unique_ids(self.property_id, "property_id")
        object.__setattr__(self, "property_id", ids.astype(str))
        for name in ("year", "floors", "land", "building", "total"):
            col = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, col)
        check_same_length(
            ("property_id", self.property_id),
            ("year", self.year),
            ("floors", self.floors),
            ("land", self.land),
            ("building", self.building),
            ("total", self.total),
        )

    @property
    def n(self) -> int:
        return len(self.property_id)


@dataclass(frozen=True)
class TaskTable:
    """Per-property related-task targets derived from assessment data.

    Regression targets are the building age in years (capped at 100) and the
    natural logs of the land, building and total values.  The floor count is
    a three-level class: 1, 2 or 3+ storeys.
    """

    property_id: np.ndarray
    age: np.ndarray
    log_land: np.ndarray
    log_building: np.ndarray
    log_total: np.ndarray
    floor_class: np.ndarray  # (n,) int in {1, 2, 3}; 3 encodes "3+"

    def __post_init__(self):
        ids = check_unique_ids(self.property_id, "property_id")
        object.__setattr__(self, "property_id", ids.astype(str))
        age = as_float_vector(self.age, "age")
        if np.any(age < 0) or np.any(age > 100):
            raise SchemaError("age must lie in [0, 100]")
        object.__setattr__(self, "age", age)
        for name in ("log_land", "log_building", "log_total"):
            object.__setattr__(
                self, name, as_float_vector(getattr(self, name), name)
            )
        floors = np.asarray(self.floor_class)
        if not np.all(np.isin(floors, (1, 2, 3))):
            raise SchemaError("floor_class values must be 1, 2 or 3")
        object.__setattr__(self, "floor_class", floors.astype(np.int64))
        check_same_length(
            ("property_id", self.property_id),
            ("age", self.age),
            ("log_land", self.log_land),
            ("log_building", self.log_building),
            ("log_total", self.log_total),
            ("floor_class", self.floor_class),
        )

    @property
    def n(self) -> int:
        return len(self.property_id)

    def regression_targets(self) -> np.ndarray:
        """Stack the four regression targets into an (n, 4) matrix."""
        return np.column_stack(
            [self.age, self.log_land, self.log_building, self.log_total]
        )

    def class_one_hot(self) -> np.ndarray:
        """One-hot encode the floor class into an (n, 3) matrix."""
        out = np.zeros((self.n, 3), dtype=np.float64)
        out[np.arange(self.n), self.floor_class - 1] = 1.0
        return out

    def targets(self) -> np.ndarray:
        """All seven targets, regression first, as an (n, 7) matrix."""
        return np.hstack([self.regression_targets(), self.class_one_hot()])


@dataclass(frozen=True)
class DerivationReport:
    """What :func:`derive_task_targets` dropped or flagged."""

    n_input: int
    n_dropped_missing: int
    n_dropped_sentinel: int
    clamped_age_ids: tuple[str, ...]
    evaluation_year: int


@dataclass(frozen=True)
class PolicyTable:
    """Per-observation insurance rows with per-peril counts and losses.

    The ``total`` peril is always recomputed as the sum of the seven base
    perils, never read from a file.
    """

    observation_id: np.ndarray
    property_id: np.ndarray  # households; repeated across observations
    exposure: np.ndarray  # years in (0, 1]
    cage: np.ndarray  # client age bucket, level index in [1, 15]
    roof: np.ndarray  # years since roofing update
    bage: np.ndarray  # building age in years
    limit: np.ndarray  # building coverage limit
    counts: dict = field(default_factory=dict)  # peril -> (n,) int64
    losses: dict = field(default_factory=dict)  # peril -> (n,) float64

    def __post_init__(self):
        obs = check_unique_ids(self.observation_id, "observation_id")
        object.__setattr__(self, "observation_id", obs.astype(str))
        object.__setattr__(
            self, "property_id", np.asarray(self.property_id, dtype=object).astype(str)
        )
        exposure = as_float_vector(self.exposure, "exposure")
        if np.any(exposure <= 0) or np.any(exposure > 1):
            raise SchemaError("exposure must lie in (0, 1]")
        object.__setattr__(self, "exposure", exposure)
        cage = np.asarray(self.cage)
        if not np.all(np.isin(cage, CAGE_LEVELS)):
            bad = sorted(set(np.unique(cage)) - set(CAGE_LEVELS))
            raise SchemaError(f"cage level index outside [1, 15]: {bad[:5]}")
        object.__setattr__(self, "cage", cage.astype(np.int64))
        for name in ("roof", "bage", "limit"):
            object.__setattr__(
                self, name, as_float_vector(getattr(self, name), name)
            )
        counts = {}
        losses = {}
        for peril in PERILS:
            if peril not in self.counts or peril not in self.losses:
                raise SchemaError(f"missing counts/losses for peril '{peril}'")
            cnt = np.asarray(self.counts[peril])
            if np.any(cnt < 0) or not np.all(cnt == np.floor(cnt)):
                raise SchemaError(f"{peril}_count must be nonnegative integers")
            cnt = cnt.astype(np.int64)
            loss = as_float_vector(self.losses[peril], f"{peril}_loss")
            if np.any(loss < 0):
                raise SchemaError(f"{peril}_loss must be nonnegative")
            if np.any((cnt == 0) & (loss > 0)):
                raise SchemaError(f"{peril}_loss positive where {peril}_count is 0")
            counts[peril] = cnt
            losses[peril] = loss
        counts["total"] = np.sum([counts[p] for p in PERILS], axis=0)
        losses["total"] = np.sum([losses[p] for p in PERILS], axis=0)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "losses", losses)
        check_same_length(
            ("observation_id", self.observation_id),
            ("property_id", self.property_id),
            ("exposure", self.exposure),
            ("cage", self.cage),
            ("roof", self.roof),
            ("bage", self.bage),
            ("limit", self.limit),
            *((f"{p}_count", counts[p]) for p in PERILS),
        )

    @property
    def n(self) -> int:
        return len(self.observation_id)

    def take(self, indices) -> "PolicyTable":
        """Subset rows by position, preserving order."""
        idx = np.asarray(indices, dtype=np.intp)
        return PolicyTable(
            observation_id=self.observation_id[idx],
            property_id=self.property_id[idx],
            exposure=self.exposure[idx],
            cage=self.cage[idx],
            roof=self.roof[idx],
            bage=self.bage[idx],
            limit=self.limit[idx],
            counts={p: self.counts[p][idx] for p in PERILS},
            losses={p: self.losses[p][idx] for p in PERILS},
        )


# ---------------------------------------------------------------------------
# design matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TermBlock:
    """A named group of design columns treated as one term in diagnostics."""

    name: str
    column_names: tuple[str, ...]
    values: np.ndarray  # (n, m)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DesignError(f"term '{self.name}' values must be 2-D")
        if vals.shape[1] != len(self.column_names):
            raise DesignError(
                f"term '{self.name}': {len(self.column_names)} names for "
                f"{vals.shape[1]} columns"
            )
        if not np.all(np.isfinite(vals)):
            raise DesignError(f"term '{self.name}' contains non-finite values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "column_names", tuple(self.column_names))


def numeric_block(values, name: str) -> TermBlock:
    """Wrap a single numeric column as a one-column term."""
    col = as_float_vector(values, name)
    return TermBlock(name=name, column_names=(name,), values=col[:, None])


@dataclass(frozen=True)
class DesignMatrix:
    """Intercept + grouped term columns, with offset and response vectors.

    ``terms`` maps each non-intercept term to its column indices; together the
    terms partition all non-intercept columns.
    """

    matrix: np.ndarray  # (n, 1 + p + l), first column is the intercept
    column_names: tuple[str, ...]
    terms: tuple[tuple[str, tuple[int, ...]], ...]
    offset: np.ndarray  # (n,), ln(exposure) for frequency, zeros for severity
    response: np.ndarray  # (n,)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(
            self,
            "terms",
            tuple((name, tuple(idx)) for name, idx in self.terms),
        )
        object.__setattr__(self, "offset", as_float_vector(self.offset, "offset"))
        object.__setattr__(
            self, "response", as_float_vector(self.response, "response")
        )
        check_same_length(
            ("matrix", mat), ("offset", self.offset), ("response", self.response)
        )
        if len(self.column_names) != mat.shape[1]:
            raise DesignError("column_names do not match matrix width")
        covered = sorted(i for _, idx in self.terms for i in idx)
        if covered != list(range(1, mat.shape[1])):
            raise DesignError("terms must partition all non-intercept columns")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def term_indices(self, name: str) -> tuple[int, ...]:
        for term, idx in self.terms:
            if term == name:
                return idx
        raise DesignError(f"no term named '{name}'")


def build_design(blocks, response, offset=None) -> DesignMatrix:
    """Assemble an intercept-led design matrix from term blocks."""
    blocks = list(blocks)
    if not blocks:
        raise DesignError("at least one term block is required")
    n = blocks[0].values.shape[0]
    names = ["(intercept)"]
    terms = []
    cols = [np.ones((n, 1))]
    pos = 1
    for block in blocks:
        if block.values.shape[0] != n:
            raise DesignError(f"term '{block.name}' has {block.values.shape[0]} rows, expected {n}")
        cols.append(block.values)
        names.extend(block.column_names)
        width = block.values.shape[1]
        terms.append((block.name, tuple(range(pos, pos + width))))
        pos += width
    response = as_float_vector(response, "response")
    if offset is None:
        offset = np.zeros(n)
    return DesignMatrix(
        matrix=np.hstack(cols),
        column_names=tuple(names),
        terms=tuple(terms),
        offset=offset,
        response=response,
    )


# ---------------------------------------------------------------------------
# file loaders / writers
# ---------------------------------------------------------------------------


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a CSV file, skipping comment lines; returns (header, numbered rows)."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        rownum = 0
        for raw in reader:
            if not raw or (raw[0].startswith("#")):
                continue
            if header is None:
                header = [c.strip() for c in raw]
                continue
            rownum += 1
            rows.append((rownum, raw))
    if header is None:
        raise SchemaError(f"{path}: empty file, header required")
    return header, rows


def _parse_float(cell: str, row: int, column: str, path) -> float:
    cell = cell.strip()
    if cell == "":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(
            f"{path}: row {row}, column {column}: could not parse {cell!r} as a number"
        ) from None


def load_id_vector_table(path, prefix: str) -> tuple[np.ndarray, np.ndarray]:
    """Read an ``id,<prefix>0..<prefix>{d-1}`` file into (ids, matrix).

    Shared by the feature-file and embedding-file readers.
    """
    header, rows = _read_rows(path)
    if len(header) < 2 or header[0] != "id":
        raise SchemaError(f"{path}: header must start with 'id'")
    expected = [f"{prefix}{j}" for j in range(len(header) - 1)]
    if header[1:] != expected:
        raise SchemaError(
            f"{path}: expected columns id,{prefix}0..{prefix}{len(header) - 2}"
        )
    width = len(header)
    ids = []
    data = np.empty((len(rows), width - 1), dtype=np.float64)
    for i, (rownum, raw) in enumerate(rows):
        if len(raw) != width:
            raise SchemaError(
                f"{path}: row {rownum}: expected {width} columns, got {len(raw)}"
            )
        ids.append(raw[0].strip())
        for j, cell in enumerate(raw[1:]):
            value = _parse_float(cell, rownum, header[j + 1], path)
            if math.isnan(value):
                raise SchemaError(
                    f"{path}: row {rownum}, column {header[j + 1]}: missing value"
                )
            data[i, j] = value
    return np.asarray(ids, dtype=object), data


def load_feature_table(path, backbone_name: str | None = None) -> FeatureMatrix:
    """Load and validate a feature file (``id,f0..f{d-1}``).

    Row order is preserved.  Raises :class:`SchemaError` on ragged rows,
    duplicate ids or non-numeric cells, naming the offending row/column.
    """
    ids, data = load_id_vector_table(path, "f")
    if backbone_name is None:
        backbone_name = Path(path).stem
    return FeatureMatrix(property_id=ids, features=data, backbone_name=backbone_name)


def write_feature_table(path, table: FeatureMatrix) -> None:
    """Write a feature matrix in the ``id,f0..`` format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{j}" for j in range(table.d_feat)])
        for pid, row in zip(table.property_id, table.features):
            writer.writerow([pid] + [f"{v:.12g}" for v in row])


_ASSESSMENT_COLUMNS = ("id", "year", "floors", "land", "building", "total")


def load_assessment_table(path) -> AssessmentTable:
    """Load an assessment file; empty cells become NaN (dropped at derivation)."""
    header, rows = _read_rows(path)
    if header != list(_ASSESSMENT_COLUMNS):
        raise SchemaError(
            f"{path}: header must be {','.join(_ASSESSMENT_COLUMNS)}"
        )
    ids = []
    data = np.empty((len(rows), 5), dtype=np.float64)
    for i, (rownum, raw) in enumerate(rows):
        if len(raw) != 6:
            raise SchemaError(f"{path}: row {rownum}: expected 6 columns, got {len(raw)}")
        ids.append(raw[0].strip())
        for j, cell in enumerate(raw[1:]):
            data[i, j] = _parse_float(cell, rownum, header[j + 1], path)
    return AssessmentTable(
        property_id=np.asarray(ids, dtype=object),
        year=data[:, 0],
        floors=data[:, 1],
        land=data[:, 2],
        building=data[:, 3],
        total=data[:, 4],
    )


def write_assessment_table(path, table: AssessmentTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ASSESSMENT_COLUMNS)
        for i in range(table.n):
            writer.writerow(
                [table.property_id[i]]
                + [
                    "" if math.isnan(v) else f"{v:.12g}"
                    for v in (
                        table.year[i],
                        table.floors[i],
                        table.land[i],
                        table.building[i],
                        table.total[i],
                    )
                ]
            )


def _policy_header() -> list[str]:
    cols = ["obs_id", "prop_id", "exposure", "cage", "roof", "bage", "limit"]
    for peril in PERILS:
        cols += [f"{peril}_count", f"{peril}_loss"]
    return cols


def load_policy_table(path) -> PolicyTable:
    """Load a policy file with per-peril counts and losses.

    The ``total`` peril is derived, so the file carries only the seven base
    perils.
    """
    header, rows = _read_rows(path)
    expected = _policy_header()
    if header != expected:
        raise SchemaError(f"{path}: header must be {','.join(expected)}")
    n = len(rows)
    obs = []
    prop = []
    numeric = np.empty((n, len(expected) - 2), dtype=np.float64)
    for i, (rownum, raw) in enumerate(rows):
        if len(raw) != len(expected):
            raise SchemaError(
                f"{path}: row {rownum}: expected {len(expected)} columns, got {len(raw)}"
            )
        obs.append(raw[0].strip())
        prop.append(raw[1].strip())
        for j, cell in enumerate(raw[2:]):
            value = _parse_float(cell, rownum, expected[j + 2], path)
            if math.isnan(value):
                raise SchemaError(
                    f"{path}: row {rownum}, column {expected[j + 2]}: missing value"
                )
            numeric[i, j] = value
    counts = {}
    losses = {}
    for k, peril in enumerate(PERILS):
        counts[peril] = numeric[:, 5 + 2 * k]
        losses[peril] = numeric[:, 6 + 2 * k]
    return PolicyTable(
        observation_id=np.asarray(obs, dtype=object),
        property_id=np.asarray(prop, dtype=object),
        exposure=numeric[:, 0],
        cage=numeric[:, 1],
        roof=numeric[:, 2],
        bage=numeric[:, 3],
        limit=numeric[:, 4],
        counts=counts,
        losses=losses,
    )


def write_policy_table(path, table: PolicyTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_policy_header())
        for i in range(table.n):
            row = [
                table.observation_id[i],
                table.property_id[i],
                f"{table.exposure[i]:.12g}",
                str(int(table.cage[i])),
                f"{table.roof[i]:.12g}",
                f"{table.bage[i]:.12g}",
                f"{table.limit[i]:.12g}",
            ]
            for peril in PERILS:
                row.append(str(int(table.counts[peril][i])))
                row.append(f"{table.losses[peril][i]:.12g}")
            writer.writerow(row)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

AGE_CAP = 100.0
VALUE_SENTINEL = 1.0  # monetary amount recorded when the lot is effectively empty
_YEAR_RANGE = (1000, 3000)

DEFAULT_EVALUATION_YEAR = 2018


def derive_task_targets(
    assessment: AssessmentTable, evaluation_year: int = DEFAULT_EVALUATION_YEAR
) -> tuple[TaskTable, DerivationReport]:
    """Turn raw assessment rows into model-ready task targets.

    Age is ``evaluation_year - year`` capped at 100 (clamped at 0 and flagged
    when the construction year postdates the evaluation year); monetary values
    are natural-log transformed.  Rows missing any required field are dropped,
    as are rows whose land, building or total value equals the 1$ sentinel.

    Already-derived rows are rejected: a ``year`` column outside a plausible
    construction-year range fails the schema rather than being transformed a
    second time.
    """
    year = assessment.year
    floors = assessment.floors
    money = np.column_stack([assessment.land, assessment.building, assessment.total])

    missing = (
        np.isnan(year)
        | np.isnan(floors)
        | np.any(np.isnan(money), axis=1)
    )
    present = ~missing

    lo, hi = _YEAR_RANGE
    bad_year = present & ((year < lo) | (year > hi))
    if np.any(bad_year):
        i = int(np.argmax(bad_year))
        raise SchemaError(
            f"year {assessment.year[i]:g} for id {assessment.property_id[i]} is "
            f"outside [{lo}, {hi}]; input looks already derived or corrupt"
        )
    bad_money = present & np.any(money <= 0, axis=1)
    if np.any(bad_money):
        i = int(np.argmax(bad_money))
        raise SchemaError(
            f"non-positive monetary value for id {assessment.property_id[i]}"
        )
    bad_floors = present & (floors < 1)
    if np.any(bad_floors):
        i = int(np.argmax(bad_floors))
        raise SchemaError(f"floors < 1 for id {assessment.property_id[i]}")

    sentinel = present & np.any(money == VALUE_SENTINEL, axis=1)
    keep = present & ~sentinel

    raw_age = evaluation_year - year[keep]
    clamped = raw_age < 0
    age = np.minimum(np.maximum(raw_age, 0.0), AGE_CAP)

    kept_ids = assessment.property_id[keep]
    table = TaskTable(
        property_id=kept_ids,
        age=age,
        log_land=np.log(assessment.land[keep]),
        log_building=np.log(assessment.building[keep]),
        log_total=np.log(assessment.total[keep]),
        floor_class=np.minimum(np.floor(floors[keep]).astype(np.int64), 3),
    )
    report = DerivationReport(
        n_input=assessment.n,
        n_dropped_missing=int(np.sum(missing)),
        n_dropped_sentinel=int(np.sum(sentinel)),
        clamped_age_ids=tuple(kept_ids[clamped]),
        evaluation_year=evaluation_year,
    )
    return table, report


def dummy_code(column, levels, reference_level, name: str = "term") -> TermBlock:
    """Dummy code a categorical column into ``len(levels) - 1`` indicators.

    The reference level encodes as an all-zero row.  The block is one term,
    so grouped diagnostics treat the indicators jointly.
    """
    levels = list(levels)
    if reference_level not in levels:
        raise DesignError(f"reference level {reference_level!r} not among levels")
    column = np.asarray(column)
    level_set = {lv for lv in levels}
    for value in column:
        if value not in level_set:
            raise DesignError(f"unseen level {value!r} in column '{name}'")
    coded_levels = [lv for lv in levels if lv != reference_level]
    values = np.zeros((len(column), len(coded_levels)))
    for j, lv in enumerate(coded_levels):
        values[:, j] = column == lv
    return TermBlock(
        name=name,
        column_names=tuple(f"{name}[{lv}]" for lv in coded_levels),
        values=values,
    )


def split_train_test(
    table: PolicyTable,
    fraction: float,
    seed: int,
    group_key: str = "property_id",
) -> tuple[PolicyTable, PolicyTable]:
    """Deterministically partition policy rows into train and test sets.

    With ``group_key="property_id"`` every observation of a household lands on
    the same side, preventing leakage across the split; with ``group_key="row"``
    rows split independently.  Sizes land within one group of ``fraction * n``.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if table.n == 0:
        raise SchemaError("cannot split an empty table")
    rng = np.random.default_rng(seed)
    n = table.n
    target = fraction * n
    if group_key == "row":
        perm = rng.permutation(n)
        n_train = int(round(target))
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
    elif group_key == "property_id":
        groups = np.unique(table.property_id)
        rng.shuffle(groups)
        sizes = {g: 0 for g in groups}
        for pid in table.property_id:
            sizes[pid] += 1
        train_groups = set()
        cum = 0
        for g in groups:
            if cum >= target:
                break
            train_groups.add(g)
            cum += sizes[g]
        in_train = np.isin(table.property_id, sorted(train_groups))
        train_idx = np.flatnonzero(in_train)
        test_idx = np.flatnonzero(~in_train)
    else:
        raise ValueError("group_key must be 'row' or 'property_id'")
    return table.take(train_idx), table.take(test_idx)


def cap_severity(amounts, cap: float) -> np.ndarray:
    """Cap loss amounts elementwise at ``cap``."""
    amounts = as_float_vector(amounts, "amounts")
    if np.any(amounts < 0):
        raise SchemaError("amounts must be nonnegative")
    if cap <= 0:
        raise ValueError("cap must be positive")
    return np.minimum(amounts, cap)
