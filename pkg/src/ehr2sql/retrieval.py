"""Exemplar retrieval: per-model cosine top-N, z-normalized and merged.

Each embedding model ranks training questions for every test question; scores
are z-normalized per model over the whole top-N score matrix so that models
with different score scales can be merged. Duplicate train questions keep the
maximum z-score across models. All sums go through math.fsum, which is exactly
rounded, so results are bit-reproducible regardless of summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from operator import mul
from pathlib import Path
from typing import Protocol, Sequence

# Below this, a z-denominator is treated as degenerate and all z-scores are 0.
Z_EPSILON = 1e-12


class DimensionMismatchError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class VectorStoreFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingVector:
    model_id: str
    dims: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != self.dims:
            raise DimensionMismatchError(
                f"vector for {self.model_id} has {len(self.values)} values, dims={self.dims}"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"vector for {self.model_id} has non-finite components")


@dataclass
class VectorStore:
    """Vectors for one embedding model, keyed by question id."""

    model_id: str
    entries: dict[str, EmbeddingVector]

    def add(self, question_id: str, vector: EmbeddingVector) -> None:
        if vector.model_id != self.model_id:
            raise VectorStoreFormatError(
                f"vector from {vector.model_id} cannot enter store for {self.model_id}"
            )
        if self.entries:
            dims = next(iter(self.entries.values())).dims
            if vector.dims != dims:
                raise DimensionMismatchError(
                    f"store {self.model_id} holds dims={dims}, got {vector.dims}"
                )
        self.entries[question_id] = vector

    @property
    def dims(self) -> int | None:
        if not self.entries:
            return None
        return next(iter(self.entries.values())).dims


@dataclass(frozen=True)
class ExemplarHit:
    train_question_id: str
    raw_score: float
    z_score: float
    source_model: str


@dataclass
class ExemplarSet:
    test_question_id: str
    hits: list[ExemplarHit]
    capacity: int


class EmbeddingProvider(Protocol):
    """Anything that can embed a batch of texts under a fixed model id."""

    model_id: str

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class _HasText(Protocol):
    id: str
    text: str


def _values(v: EmbeddingVector | Sequence[float]) -> Sequence[float]:
    return v.values if isinstance(v, EmbeddingVector) else v


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    return math.fsum(map(mul, a, b))


def _norm(a: Sequence[float]) -> float:
    return math.sqrt(math.fsum(x * x for x in a))


def cosine_similarity(a: EmbeddingVector | Sequence[float], b: EmbeddingVector | Sequence[float]) -> float:
    """dot(a, b) / (|a| * |b|), exactly-rounded sums."""
    va, vb = _values(a), _values(b)
    if len(va) != len(vb):
        raise DimensionMismatchError(f"dims differ: {len(va)} vs {len(vb)}")
    na = _norm(va)
    nb = _norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity undefined for a zero vector")
    return _dot(va, vb) / (na * nb)


def top_n_similar(
    test_vector: EmbeddingVector | Sequence[float],
    train_store: VectorStore,
    n: int,
    exclude: str | None = None,
) -> list[tuple[str, float]]:
    """Top-n (train_id, cosine) pairs, score descending, ties by ascending id."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    tv = _values(test_vector)
    tn = _norm(tv)
    if tn == 0.0:
        raise ZeroVectorError("cosine similarity undefined for a zero vector")
    items = _store_items(train_store, tv)
    return _scan(tv, tn, items, n, exclude)


def _store_items(store: VectorStore, probe: Sequence[float]) -> list[tuple[str, tuple[float, ...], float]]:
    items = []
    for qid, vec in store.entries.items():
        if vec.dims != len(probe):
            raise DimensionMismatchError(
                f"store {store.model_id} dims={vec.dims}, query dims={len(probe)}"
            )
        norm = _norm(vec.values)
        if norm == 0.0:
            raise ZeroVectorError(f"stored vector {qid!r} is a zero vector")
        items.append((qid, vec.values, norm))
    return items


def _scan(
    test_values: Sequence[float],
    test_norm: float,
    items: Sequence[tuple[str, tuple[float, ...], float]],
    n: int,
    exclude: str | None,
) -> list[tuple[str, float]]:
    scored = [
        (qid, _dot(test_values, values) / (test_norm * norm))
        for qid, values, norm in items
        if qid != exclude
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:n]


def z_normalize(scores: Sequence[Sequence[float]]) -> list[list[float]]:
    """Z-normalize every entry against the mean/population-std of the whole matrix.

    A near-constant matrix (std < Z_EPSILON) maps to all zeros rather than
    amplifying noise.
    """
    flat = [x for row in scores for x in row]
    if not flat:
        raise ValueError("z_normalize needs a non-empty score matrix")
    mean = math.fsum(flat) / len(flat)
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in flat) / len(flat))
    if std < Z_EPSILON:
        return [[0.0] * len(row) for row in scores]
    return [[(x - mean) / std for x in row] for row in scores]


def _hit_order(hit: ExemplarHit) -> tuple[float, float, str]:
    return (-hit.z_score, -hit.raw_score, hit.train_question_id)


def sort_and_merge(
    accumulated: list[ExemplarSet],
    new_hits: Sequence[Sequence[ExemplarHit]],
    n: int,
) -> list[ExemplarSet]:
    """Merge one model's hits into the accumulated per-question exemplar sets.

    Duplicate train ids keep the hit with the strictly greater z-score, so on
    ties the earlier model (already accumulated) wins. After dedup the sort
    key (z desc, raw desc, id asc) is a total order because ids are unique.
    """
    if len(accumulated) != len(new_hits):
        raise AlignmentError(
            f"{len(accumulated)} accumulated sets vs {len(new_hits)} hit rows"
        )
    merged_sets = []
    for acc_set, hits in zip(accumulated, new_hits):
        merged: dict[str, ExemplarHit] = {h.train_question_id: h for h in acc_set.hits}
        for hit in hits:
            cur = merged.get(hit.train_question_id)
            if cur is None or hit.z_score > cur.z_score:
                merged[hit.train_question_id] = hit
        ordered = sorted(merged.values(), key=_hit_order)[:n]
        merged_sets.append(ExemplarSet(acc_set.test_question_id, ordered, n))
    return merged_sets


def retrieve(
    test_questions: Sequence[_HasText],
    train_questions: Sequence[_HasText],
    providers: Sequence[EmbeddingProvider],
    n: int,
    exclude_same_id: bool = False,
) -> list[ExemplarSet]:
    """Run every provider and merge its z-normalized top-n hits per question.

    With exclude_same_id=True a train question never retrieves itself, which
    makes train-vs-train retrieval usable for finetuning exports.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    sets = [ExemplarSet(q.id, [], n) for q in test_questions]
    if n == 0 or not train_questions:
        return sets
    train_ids = [q.id for q in train_questions]
    if len(set(train_ids)) != len(train_ids):
        raise AlignmentError("duplicate train question ids")
    train_texts = [q.text for q in train_questions]
    test_texts = [q.text for q in test_questions]
    for provider in providers:
        train_vecs = provider.embed(train_texts)
        test_vecs = provider.embed(test_texts)
        if len(train_vecs) != len(train_questions) or len(test_vecs) != len(test_questions):
            raise AlignmentError(f"provider {provider.model_id} returned misaligned batch")
        items = []
        for qid, vec in zip(train_ids, train_vecs):
            norm = _norm(vec.values)
            if norm == 0.0:
                raise ZeroVectorError(f"train vector {qid!r} is a zero vector")
            items.append((qid, vec.values, norm))
        id_rows: list[list[str]] = []
        score_rows: list[list[float]] = []
        for tq, tvec in zip(test_questions, test_vecs):
            tn = _norm(tvec.values)
            if tn == 0.0:
                raise ZeroVectorError(f"test vector {tq.id!r} is a zero vector")
            pairs = _scan(
                tvec.values, tn, items, n, tq.id if exclude_same_id else None
            )
            id_rows.append([qid for qid, _ in pairs])
            score_rows.append([score for _, score in pairs])
        if not any(score_rows):
            continue
        z_rows = z_normalize(score_rows)
        hit_rows = [
            [
                ExemplarHit(qid, raw, z, provider.model_id)
                for qid, raw, z in zip(ids, raws, zs)
            ]
            for ids, raws, zs in zip(id_rows, score_rows, z_rows)
        ]
        sets = sort_and_merge(sets, hit_rows, n)
    return sets


def save_vector_store(store: VectorStore, path: str | Path) -> None:
    """Write the tab-separated store format: header `model_id<TAB>dims`, then
    one `id<TAB>v1,v2,...` line per vector. Floats use repr, which round-trips."""
    dims = store.dims
    if dims is None:
        raise VectorStoreFormatError("refusing to save an empty vector store")
    lines = [f"{store.model_id}\t{dims}"]
    for qid, vec in store.entries.items():
        lines.append(f"{qid}\t{','.join(repr(v) for v in vec.values)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vector_store(path: str | Path) -> VectorStore:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise VectorStoreFormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise VectorStoreFormatError(f"{path}: empty file")
    header = lines[0].split("\t")
    if len(header) != 2:
        raise VectorStoreFormatError(f"{path}: header must be `model_id<TAB>dims`")
    model_id, dims_text = header
    try:
        dims = int(dims_text)
    except ValueError as exc:
        raise VectorStoreFormatError(f"{path}: bad dims {dims_text!r}") from exc
    if dims <= 0:
        raise VectorStoreFormatError(f"{path}: dims must be positive, got {dims}")
    store = VectorStore(model_id=model_id, entries={})
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise VectorStoreFormatError(f"{path}:{lineno}: expected `id<TAB>values`")
        qid, blob = parts
        try:
            values = tuple(float(tok) for tok in blob.split(","))
        except ValueError as exc:
            raise VectorStoreFormatError(f"{path}:{lineno}: bad float") from exc
        if len(values) != dims:
            raise VectorStoreFormatError(
                f"{path}:{lineno}: {len(values)} values, header says {dims}"
            )
        try:
            vec = EmbeddingVector(model_id=model_id, dims=dims, values=values)
        except ValueError as exc:
            raise VectorStoreFormatError(f"{path}:{lineno}: {exc}") from exc
        if qid in store.entries:
            raise VectorStoreFormatError(f"{path}:{lineno}: duplicate id {qid!r}")
        store.entries[qid] = vec
    return store
