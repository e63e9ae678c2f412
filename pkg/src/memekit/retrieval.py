"""Bidirectional meme/text retrieval evaluation.

Texts and memes are embedded, unit-normalized, and crossed into a cosine
similarity matrix; Recall@K is computed in both directions from gold ranks
with a deterministic tie rule (equal similarities rank by lower index first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .embeddings import Encoder, EmbeddingStore, encode, normalize_rows

TEXT2MEME = "text2meme"
MEME2TEXT = "meme2text"
DIRECTIONS = (TEXT2MEME, MEME2TEXT)

TEXT_TYPES = ("meme_caption", "image_caption", "embedded_text", "title")


class RetrievalError(Exception):
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    text_ids: tuple[str, ...]
    meme_ids: tuple[str, ...]
    values: np.ndarray  # shape (len(text_ids), len(meme_ids))

    def __post_init__(self):
        if self.values.shape != (len(self.text_ids), len(self.meme_ids)):
            raise RetrievalError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.text_ids)} texts x {len(self.meme_ids)} memes"
            )
        if not np.all(np.isfinite(self.values)):
            raise RetrievalError("similarity matrix contains non-finite values")


def similarity(texts: EmbeddingStore, memes: EmbeddingStore) -> SimilarityMatrix:
    """Dot products of normalized text rows against normalized meme rows."""
    if not texts.normalized or not memes.normalized:
        raise RetrievalError("similarity requires normalized stores")
    if texts.dimension != memes.dimension:
        raise RetrievalError(
            f"dimension mismatch: texts {texts.dimension} vs memes {memes.dimension}"
        )
    values = texts.vectors.astype(np.float64) @ memes.vectors.astype(np.float64).T
    return SimilarityMatrix(text_ids=texts.ids, meme_ids=memes.ids, values=values)


def _rank_in_scores(scores: np.ndarray, gold_index: int) -> int:
    gold_score = scores[gold_index]
    greater = int(np.sum(scores > gold_score))
    tied_before = int(np.sum((scores == gold_score) & (np.arange(len(scores)) < gold_index)))
    return 1 + greater + tied_before


def gold_rank(
    matrix: SimilarityMatrix,
    gold: Mapping[str, str],
    query_id: str,
    direction: str,
) -> int:
    """1-based rank of the gold item for a query.

    text2meme ranks one meme per text; meme2text ranks all texts owned by the
    meme and returns the best-ranked one. Ties resolve by lower index first.
    """
    if direction == TEXT2MEME:
        if query_id not in gold:
            raise RetrievalError(f"query {query_id!r} has no gold meme")
        row = matrix.values[matrix.text_ids.index(query_id)]
        return _rank_in_scores(row, matrix.meme_ids.index(gold[query_id]))
    if direction == MEME2TEXT:
        col = matrix.values[:, matrix.meme_ids.index(query_id)]
        gold_rows = [i for i, tid in enumerate(matrix.text_ids) if gold.get(tid) == query_id]
        if not gold_rows:
            raise RetrievalError(f"query {query_id!r} has no gold texts")
        return min(_rank_in_scores(col, i) for i in gold_rows)
    raise RetrievalError(f"unknown direction {direction!r}")


def recall_at_k(
    matrix: SimilarityMatrix,
    gold: Mapping[str, str],
    k: int,
    direction: str,
) -> float:
    """Fraction of queries whose gold rank is at most k.

    text2meme queries are all texts; meme2text queries are the memes owning
    at least one gold text (a meme without texts has no defined rank).
    """
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    if direction == TEXT2MEME:
        queries = list(matrix.text_ids)
    elif direction == MEME2TEXT:
        owned = set(gold.values())
        queries = [mid for mid in matrix.meme_ids if mid in owned]
    else:
        raise RetrievalError(f"unknown direction {direction!r}")
    if not queries:
        raise RetrievalError("no queries with gold entries")
    hits = sum(1 for q in queries if gold_rank(matrix, gold, q, direction) <= k)
    return hits / len(queries)


@dataclass
class RetrievalReport:
    """Recall@K per text type and direction, plus the overall mean per cell."""

    ks: tuple[int, ...]
    results: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, text_type: str, direction: str, recalls: Mapping[int, float]) -> None:
        cell = {f"r_at_{k}": recalls[k] for k in self.ks}
        cell["overall_mean"] = float(np.mean([recalls[k] for k in self.ks]))
        self.results.setdefault(text_type, {})[direction] = cell

    def get(self, text_type: str, direction: str, k: int) -> float:
        return self.results[text_type][direction][f"r_at_{k}"]

    def mean_recall_at(self, k: int) -> float:
        cells = [cell[f"r_at_{k}"] for per_dir in self.results.values()
                 for cell in per_dir.values()]
        return float(np.mean(cells))

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "results": self.results,
            "provenance": self.provenance,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def texts_for_type(corpus, annotations: Mapping[str, "object"], text_type: str) -> dict[str, str]:
    """Pull the requested text for every meme, erroring on a missing field."""
    out = {}
    for meme in corpus.memes:
        if text_type == "title":
            out[meme.meme_id] = meme.title
            continue
        record = annotations.get(meme.meme_id)
        if text_type == "embedded_text" and record is None:
            out[meme.meme_id] = meme.embedded_text
            continue
        if record is None:
            raise RetrievalError(f"meme {meme.meme_id!r} has no annotation record")
        value = getattr(record, text_type, None)
        if value is None:
            raise RetrievalError(
                f"annotation for {meme.meme_id!r} is missing field {text_type!r}"
            )
        out[meme.meme_id] = value
    return out


def evaluate(
    corpus,
    annotations: Mapping[str, "object"],
    encoder: Encoder,
    text_types: Sequence[str] = TEXT_TYPES,
    ks: Sequence[int] = (1, 5, 10),
    provenance: Optional[dict] = None,
) -> RetrievalReport:
    """Embed memes and each requested text type, then score both directions.

    Each meme owns exactly one text per type here, keyed ``meme_id::type``;
    the gold map sends that text to its meme.
    """
    report = RetrievalReport(ks=tuple(ks), provenance=dict(provenance or {}))
    meme_ids = [m.meme_id for m in corpus.memes]
    images = [m.image for m in corpus.memes]
    meme_store = normalize_rows(encode(images, meme_ids, "image", encoder))
    for text_type in text_types:
        texts = texts_for_type(corpus, annotations, text_type)
        text_ids = [f"{mid}::{text_type}" for mid in meme_ids]
        gold = {tid: mid for tid, mid in zip(text_ids, meme_ids)}
        text_store = normalize_rows(
            encode([texts[mid] for mid in meme_ids], text_ids, "text", encoder)
        )
        matrix = similarity(text_store, meme_store)
        for direction in DIRECTIONS:
            recalls = {k: recall_at_k(matrix, gold, k, direction) for k in ks}
            report.add(text_type, direction, recalls)
    return report
