"""Embedding vectors keyed by property id, with provenance.

Embeddings are exported as ``id,g0..g{l-1}`` comma-separated files whose first
line is a ``#``-prefixed provenance comment recording how they were built.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .ingest import load_id_vector_table
from .validation import check_same_length, check_unique_ids

APPROACHES = ("pca", "frozen", "fine-tuned")


@dataclass(frozen=True)
class Provenance:
    """How an embedding set was constructed."""

    approach: str  # pca | frozen | fine-tuned
    backbone: str = "unknown"
    embedding_size: int = 0
    seed: int | None = None
    decorrelated: bool = False

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise SchemaError(
                f"approach must be one of {APPROACHES}, got {self.approach!r}"
            )


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-property embedding vectors of a fixed size."""

    property_id: np.ndarray
    vectors: np.ndarray  # (n, l)
    provenance: Provenance

    def __post_init__(self):
        ids = check_unique_ids(self.property_id, "property_id")
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2:
            raise SchemaError(f"vectors must be 2-D, got shape {vecs.shape}")
        if not np.all(np.isfinite(vecs)):
            raise SchemaError("embedding vectors contain non-finite values")
        check_same_length(("property_id", ids), ("vectors", vecs))
        object.__setattr__(self, "property_id", ids.astype(str))
        object.__setattr__(self, "vectors", vecs)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def embedding_size(self) -> int:
        return self.vectors.shape[1]

    def with_vectors(self, vectors, **provenance_changes) -> "EmbeddingSet":
        """Same ids, new vectors, optionally amended provenance."""
        prov = replace(self.provenance, **provenance_changes)
        return EmbeddingSet(
            property_id=self.property_id, vectors=vectors, provenance=prov
        )

    def lookup(self, ids) -> np.ndarray:
        """Gather embedding rows for the requested ids (repeats allowed)."""
        index = {pid: i for i, pid in enumerate(self.property_id)}
        missing = [str(i) for i in ids if str(i) not in index]
        if missing:
            shown = ", ".join(missing[:5])
            raise SchemaError(f"no embedding for property id(s): {shown}")
        rows = np.fromiter(
            (index[str(i)] for i in ids), dtype=np.intp, count=len(ids)
        )
        return self.vectors[rows]


def _format_provenance(prov: Provenance) -> str:
    parts = [
        f"approach={prov.approach}",
        f"backbone={prov.backbone}",
        f"embedding_size={prov.embedding_size}",
        f"seed={'none' if prov.seed is None else prov.seed}",
        f"decorrelated={str(prov.decorrelated).lower()}",
    ]
    return "# " + " ".join(parts)


def _parse_provenance(line: str) -> Provenance:
    fields = dict(
        item.split("=", 1) for item in line.lstrip("#").split() if "=" in item
    )
    try:
        seed = fields.get("seed", "none")
        return Provenance(
            approach=fields["approach"],
            backbone=fields.get("backbone", "unknown"),
            embedding_size=int(fields.get("embedding_size", 0)),
            seed=None if seed == "none" else int(seed),
            decorrelated=fields.get("decorrelated", "false") == "true",
        )
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"malformed provenance comment: {line!r}") from exc


def write_embeddings(path, embeddings: EmbeddingSet) -> None:
    """Write ``id,g0..`` rows preceded by a provenance comment line."""
    size = embeddings.embedding_size
    with open(path, "w", newline="") as fh:
        fh.write(_format_provenance(embeddings.provenance) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"g{j}" for j in range(size)])
        for pid, row in zip(embeddings.property_id, embeddings.vectors):
            writer.writerow([pid] + [f"{v:.17g}" for v in row])


def read_embeddings(path) -> EmbeddingSet:
    """Read an embedding file, restoring provenance from its comment line."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise SchemaError(f"{path}: missing provenance comment line")
    provenance = _parse_provenance(first.strip())
    ids, vectors = load_id_vector_table(path, "g")
    if provenance.embedding_size and provenance.embedding_size != vectors.shape[1]:
        raise SchemaError(
            f"{path}: provenance declares embedding_size="
            f"{provenance.embedding_size} but file has {vectors.shape[1]} columns"
        )
    return EmbeddingSet(property_id=ids, vectors=vectors, provenance=provenance)
