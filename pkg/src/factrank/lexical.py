"""Okapi BM25 inverted index and candidate selection.

The index is built over title-prefixed span text (the same string the
dense encoder sees). Candidate selection partitions a document set into
the top-k wild spans and top-l gold spans by BM25 score, with ties broken
by ascending doc_id for run-to-run determinism.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import DocumentSet, DocumentSpan, Query
from .errors import InvalidArgumentError


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens; applied to documents and queries alike."""
    return text.lower().split()


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise InvalidArgumentError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise InvalidArgumentError(f"b must be in [0, 1], got {self.b}")


@dataclass
class Bm25Index:
    """Immutable posting lists over one document collection."""

    doc_ids: list[str]
    postings: dict[str, list[tuple[int, int]]]  # term -> [(doc ordinal, tf)], sorted
    doc_lengths: list[int]
    avg_doc_length: float
    params: Bm25Params = field(default_factory=Bm25Params)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        """ln(1 + (N - n_t + 0.5) / (n_t + 0.5)); never negative."""
        n_t = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.n_docs - n_t + 0.5) / (n_t + 0.5))


def build_index(spans: list[DocumentSpan], params: Bm25Params | None = None) -> Bm25Index:
    """Build an inverted index over the spans' title-prefixed text."""
    if not spans:
        raise InvalidArgumentError("cannot build an index over zero spans")
    params = params or Bm25Params()
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for ordinal, span in enumerate(spans):
        tokens = tokenize(span.text)
        doc_lengths.append(len(tokens))
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((ordinal, tf))
    return Bm25Index(
        doc_ids=[s.doc_id for s in spans],
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths) / len(doc_lengths),
        params=params,
    )


def bm25_score(index: Bm25Index, query_text: str, doc_ordinal: int) -> float:
    """Okapi BM25 score of one document for a query.

    Repeated query terms contribute once per occurrence. A document sharing
    no term with the query scores exactly 0.
    """
    if not 0 <= doc_ordinal < index.n_docs:
        raise InvalidArgumentError(f"doc_ordinal {doc_ordinal} out of range")
    k1, b = index.params.k1, index.params.b
    dl = index.doc_lengths[doc_ordinal]
    score = 0.0
    for term in tokenize(query_text):
        posting = index.postings.get(term)
        if not posting:
            continue
        tf = 0
        for ordinal, term_freq in posting:
            if ordinal == doc_ordinal:
                tf = term_freq
                break
        if tf == 0:
            continue
        denom = tf + k1 * (1.0 - b + b * dl / index.avg_doc_length)
        score += index.idf(term) * tf * (k1 + 1.0) / denom
    return score


def score_all(index: Bm25Index, query_text: str) -> list[float]:
    """Score every document for a query (single pass over posting lists)."""
    k1, b = index.params.k1, index.params.b
    scores = [0.0] * index.n_docs
    for term in tokenize(query_text):
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = index.idf(term)
        for ordinal, tf in posting:
            dl = index.doc_lengths[ordinal]
            denom = tf + k1 * (1.0 - b + b * dl / index.avg_doc_length)
            scores[ordinal] += idf * tf * (k1 + 1.0) / denom
    return scores


@dataclass
class CandidateSets:
    """Top-k wild and top-l gold spans, each sorted by descending BM25 score."""

    wild: list[DocumentSpan] = field(default_factory=list)
    gold: list[DocumentSpan] = field(default_factory=list)

    def all_spans(self) -> list[DocumentSpan]:
        return self.wild + self.gold


def select_candidates(
    query: Query,
    docset: DocumentSet,
    k: int = 10,
    l: int = 5,
    params: Bm25Params | None = None,
) -> CandidateSets:
    """Select BM25 candidates from a document set.

    One index is built over the whole set (wild and gold together) so IDF
    reflects the full collection; the top-k non-gold and top-l gold spans
    are returned. An empty document set yields empty candidate sets.
    """
    if k <= 0:
        raise InvalidArgumentError(f"k must be > 0, got {k}")
    if l < 0:
        raise InvalidArgumentError(f"l must be >= 0, got {l}")
    if not docset.spans:
        return CandidateSets()

    index = build_index(docset.spans, params)
    scores = score_all(index, query.text)
    ranked = sorted(
        zip(docset.spans, scores), key=lambda pair: (-pair[1], pair[0].doc_id)
    )
    wild = [span for span, _ in ranked if not span.is_gold][:k]
    gold = [span for span, _ in ranked if span.is_gold][:l]
    return CandidateSets(wild=wild, gold=gold)
