"""Content-based filtering: tokenization, TF-IDF weights, cosine retrieval.

Weights are raw term counts times the natural-log inverse document
frequency; cosine normalization absorbs document length, so rankings are
invariant to uniformly rescaled term counts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from .catalog import Item

_TOKEN = re.compile(r"[a-z0-9]+")


class EmptyCorpusError(ValueError):
    """TF-IDF model requested over zero documents."""


class UnknownItemError(KeyError):
    """Item id not present in the model."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop short tokens and pure numbers."""
    return [
        tok
        for tok in _TOKEN.findall(text.lower())
        if len(tok) >= 2 and not tok.isdigit()
    ]


def cosine_similarity(a: Mapping, b: Mapping) -> float:
    """Cosine of two sparse {key: weight} vectors; 0 when either norm is 0."""
    if len(b) < len(a):
        a, b = b, a
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


@dataclass(frozen=True)
class TfIdfModel:
    """Per-item TF-IDF weight vectors over a shared vocabulary.

    Vectors are stored CSR-style (``offsets``/``term_idx``/``weights``) with
    one row per item in ``item_ids`` order. A term occurring in a document
    gets a stored entry even when its weight is zero (a term present in
    every document); absent terms are never stored.
    """

    vocabulary: dict[str, int]
    doc_freq: np.ndarray
    n_docs: int
    item_ids: tuple[str, ...]
    item_row: dict[str, int]
    offsets: np.ndarray
    term_idx: np.ndarray
    weights: np.ndarray
    norms: np.ndarray

    def vector(self, item_id: str) -> dict[str, float]:
        """The item's weight vector as {term: weight}."""
        row = self.item_row.get(item_id)
        if row is None:
            raise UnknownItemError(item_id)
        terms = {idx: term for term, idx in self.vocabulary.items()}
        s, e = self.offsets[row], self.offsets[row + 1]
        return {terms[int(t)]: float(w) for t, w in zip(self.term_idx[s:e], self.weights[s:e])}

    def row_slice(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.offsets[row], self.offsets[row + 1]
        return self.term_idx[s:e], self.weights[s:e]


def build_tfidf(items: Sequence["Item"]) -> TfIdfModel:
    """Fit TF-IDF over ``title + " " + description`` of every item."""
    if not items:
        raise EmptyCorpusError("no items to index")
    docs = [tokenize(item.title + " " + item.description) for item in items]
    vocabulary: dict[str, int] = {}
    for term in sorted({t for doc in docs for t in doc}):
        vocabulary[term] = len(vocabulary)
    doc_freq = np.zeros(len(vocabulary), dtype=np.int64)
    for doc in docs:
        for term in set(doc):
            doc_freq[vocabulary[term]] += 1

    n_docs = len(items)
    offsets = np.zeros(n_docs + 1, dtype=np.int64)
    term_cols: list[int] = []
    weight_vals: list[float] = []
    for row, doc in enumerate(docs):
        counts: dict[int, int] = {}
        for term in doc:
            idx = vocabulary[term]
            counts[idx] = counts.get(idx, 0) + 1
        for idx in sorted(counts):
            term_cols.append(idx)
            weight_vals.append(counts[idx] * math.log(n_docs / doc_freq[idx]))
        offsets[row + 1] = len(term_cols)

    term_idx = np.array(term_cols, dtype=np.int64)
    weights = np.array(weight_vals, dtype=np.float64)
    norms = np.sqrt(
        np.bincount(
            np.repeat(np.arange(n_docs), np.diff(offsets)),
            weights=weights**2,
            minlength=n_docs,
        )
    )
    return TfIdfModel(
        vocabulary=vocabulary,
        doc_freq=doc_freq,
        n_docs=n_docs,
        item_ids=tuple(item.id for item in items),
        item_row={item.id: row for row, item in enumerate(items)},
        offsets=offsets,
        term_idx=term_idx,
        weights=weights,
        norms=norms,
    )


def scores_against(model: TfIdfModel, profile: np.ndarray) -> np.ndarray:
    """Cosine of every item row against a dense vocabulary-sized vector."""
    pnorm = float(np.linalg.norm(profile))
    if pnorm == 0.0:
        return np.zeros(model.n_docs)
    row_ids = np.repeat(np.arange(model.n_docs), np.diff(model.offsets))
    dots = np.bincount(row_ids, weights=model.weights * profile[model.term_idx], minlength=model.n_docs)
    denom = model.norms * pnorm
    return np.divide(dots, denom, out=np.zeros(model.n_docs), where=denom > 0)


def dense_row(model: TfIdfModel, row: int) -> np.ndarray:
    out = np.zeros(len(model.vocabulary))
    idx, w = model.row_slice(row)
    out[idx] = w
    return out


def related_items(model: TfIdfModel, item_id: str, n: int) -> list[tuple[str, float]]:
    """Top-n items by cosine similarity to ``item_id``, the item itself excluded."""
    if n < 1:
        raise ValueError("n must be >= 1")
    row = model.item_row.get(item_id)
    if row is None:
        raise UnknownItemError(item_id)
    scores = scores_against(model, dense_row(model, row))
    ranked = sorted(
        (
            (model.item_ids[r], float(scores[r]))
            for r in range(model.n_docs)
            if r != row
        ),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:n]


def query_vector(model: TfIdfModel, query: str) -> np.ndarray:
    """TF-IDF vector of free text treated as a pseudo-document."""
    out = np.zeros(len(model.vocabulary))
    for term in tokenize(query):
        idx = model.vocabulary.get(term)
        if idx is not None:
            out[idx] += math.log(model.n_docs / model.doc_freq[idx])
    return out


def search_items(model: TfIdfModel, query: str, limit: int) -> list[tuple[str, float]]:
    """Items ranked by cosine against the query pseudo-document; zero scores dropped."""
    scores = scores_against(model, query_vector(model, query))
    ranked = sorted(
        ((model.item_ids[r], float(scores[r])) for r in range(model.n_docs) if scores[r] > 0),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:limit]
