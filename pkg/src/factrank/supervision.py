"""Contrastive training-set generation from multiple supervision signals.

Five strategies turn BM25 candidates into {positives, negatives} pairs:

* ``gold``        - the single best-ranked gold span vs. all non-gold
                    candidates.
* ``distill``     - a relevance judge labels each wild candidate.
* ``distill_gold``- the judge labels wild and gold candidates together.
* ``lerc``        - answers read from each candidate are shortened and
                    scored for equivalence against the gold answer; the
                    best span above 0.7 is positive, spans below 0.3 are
                    negatives, the mid-band is discarded.
* ``distill_gold_plus_lerc`` - union of distill_gold and lerc positives;
                    distill_gold negatives minus anything promoted.

Examples with an empty side are dropped by ``filter_empty`` before
training; per-document judge verdicts and scores are kept in ``metadata``
for audit. Failed judge or reader calls discard the span (recorded as
unscored) rather than defaulting it to negative.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .clients import EquivalenceScore, JudgeVerdict, ReaderAnswer
from .corpus import (
    ChunkConfig,
    ClaimRecord,
    Dataset,
    DocumentSpan,
    Query,
    SubQuestion,
    build_document_set,
    make_query,
)
from .errors import DatasetParseError, DatasetSchemaError, FactrankError, InvalidArgumentError
from .lexical import Bm25Params, CandidateSets, select_candidates

STRATEGIES = ("gold", "distill", "distill_gold", "lerc", "distill_gold_plus_lerc")

RelevanceJudge = Callable[[str, str, str], JudgeVerdict]
Reader = Callable[[str, str, str], ReaderAnswer]
Shortener = Callable[[str], str]
EquivalenceScorer = Callable[[str, str, str], EquivalenceScore]

POS_THRESHOLD = 0.7
NEG_THRESHOLD = 0.3


@dataclass
class ContrastiveExample:
    query: Query
    positives: list[DocumentSpan]
    negatives: list[DocumentSpan]
    strategy: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidArgumentError(f"unknown strategy {self.strategy!r}")
        pos_ids = {s.doc_id for s in self.positives}
        neg_ids = {s.doc_id for s in self.negatives}
        shared = pos_ids & neg_ids
        if shared:
            raise InvalidArgumentError(
                f"positives and negatives overlap on {sorted(shared)}"
            )

    @property
    def is_trainable(self) -> bool:
        return bool(self.positives) and bool(self.negatives)


@dataclass
class TrainTuple:
    query: Query
    positive: DocumentSpan
    negative: DocumentSpan


@dataclass
class DatasetStats:
    n_examples: int
    mean_pos: float
    mean_neg: float
    strategy: str

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "mean_pos": self.mean_pos,
            "mean_neg": self.mean_neg,
            "strategy": self.strategy,
        }


def gen_gold(query: Query, candidates: CandidateSets) -> ContrastiveExample:
    """Top-ranked gold span as the positive, non-gold candidates as negatives."""
    positives = [candidates.gold[0]] if candidates.gold else []
    negatives = [span for span in candidates.wild if not span.is_gold]
    return ContrastiveExample(
        query=query, positives=positives, negatives=negatives, strategy="gold",
        metadata={"n_gold_candidates": len(candidates.gold)},
    )


def _judge_partition(
    query: Query,
    claim_text: str,
    question_text: str,
    spans: Sequence[DocumentSpan],
    relevance_judge: RelevanceJudge,
    strategy: str,
) -> ContrastiveExample:
    positives: list[DocumentSpan] = []
    negatives: list[DocumentSpan] = []
    verdicts: dict[str, str] = {}
    unscored: list[str] = []
    for span in spans:
        try:
            verdict = relevance_judge(claim_text, question_text, span.text)
        except FactrankError as exc:
            unscored.append(span.doc_id)
            verdicts[span.doc_id] = f"error: {exc}"
            continue
        verdicts[span.doc_id] = verdict.raw_response
        (positives if verdict.relevant else negatives).append(span)
    return ContrastiveExample(
        query=query, positives=positives, negatives=negatives, strategy=strategy,
        metadata={"verdicts": verdicts, "unscored": unscored},
    )


def gen_distill(
    query: Query,
    candidates: CandidateSets,
    relevance_judge: RelevanceJudge,
    claim_text: str,
    question_text: str,
) -> ContrastiveExample:
    """Judge each wild candidate; relevant spans become positives."""
    return _judge_partition(
        query, claim_text, question_text, candidates.wild, relevance_judge, "distill"
    )


def gen_distill_gold(
    query: Query,
    candidates: CandidateSets,
    relevance_judge: RelevanceJudge,
    claim_text: str,
    question_text: str,
) -> ContrastiveExample:
    """Judge wild and gold candidates together (one call per span)."""
    return _judge_partition(
        query, claim_text, question_text, candidates.all_spans(), relevance_judge,
        "distill_gold",
    )


def gen_lerc(
    query: Query,
    candidates: CandidateSets,
    reader: Reader,
    shortener: Shortener,
    equiv_scorer: EquivalenceScorer,
    gold_answer: Optional[str],
    claim_text: str,
    question_text: str,
    pos_thresh: float = POS_THRESHOLD,
    neg_thresh: float = NEG_THRESHOLD,
) -> ContrastiveExample:
    """Score answer equivalence per candidate; threshold into D+/D-.

    The single highest-scoring span above ``pos_thresh`` is the positive
    (ties broken by ascending doc_id); spans below ``neg_thresh`` are
    negatives; the mid-band is discarded entirely. Without a gold answer
    the example is empty and falls to the filter stage.
    """
    spans = candidates.all_spans()
    if gold_answer is None or not gold_answer.strip():
        return ContrastiveExample(
            query=query, positives=[], negatives=[], strategy="lerc",
            metadata={"skipped": "no gold answer"},
        )
    scores: dict[str, float] = {}
    unscored: list[str] = []
    scored_spans: list[tuple[DocumentSpan, float]] = []
    try:
        gold_short = shortener(gold_answer)
    except FactrankError as exc:
        return ContrastiveExample(
            query=query, positives=[], negatives=[], strategy="lerc",
            metadata={"skipped": f"gold answer unshortenable: {exc}"},
        )
    for span in spans:
        try:
            answer = reader(claim_text, question_text, span.text)
            short = shortener(answer.answer)
            score = equiv_scorer(gold_short, short, question_text).score
        except FactrankError:
            unscored.append(span.doc_id)
            continue
        scores[span.doc_id] = score
        scored_spans.append((span, score))

    above = [(span, score) for span, score in scored_spans if score > pos_thresh]
    positives = []
    if above:
        best_score = max(score for _, score in above)
        best = min(
            (span for span, score in above if score == best_score),
            key=lambda s: s.doc_id,
        )
        positives = [best]
    negatives = [span for span, score in scored_spans if score < neg_thresh]
    return ContrastiveExample(
        query=query, positives=positives, negatives=negatives, strategy="lerc",
        metadata={"equivalence": scores, "unscored": unscored},
    )


def gen_cfr(
    query: Query,
    candidates: CandidateSets,
    relevance_judge: RelevanceJudge,
    reader: Reader,
    shortener: Shortener,
    equiv_scorer: EquivalenceScorer,
    gold_answer: Optional[str],
    claim_text: str,
    question_text: str,
) -> ContrastiveExample:
    """Union distill_gold and lerc positives; resolve conflicts toward positive."""
    dg = gen_distill_gold(query, candidates, relevance_judge, claim_text, question_text)
    lerc = gen_lerc(
        query, candidates, reader, shortener, equiv_scorer, gold_answer,
        claim_text, question_text,
    )
    positives = list(dg.positives)
    seen = {span.doc_id for span in positives}
    for span in lerc.positives:
        if span.doc_id not in seen:
            positives.append(span)
            seen.add(span.doc_id)
    negatives = [span for span in dg.negatives if span.doc_id not in seen]
    return ContrastiveExample(
        query=query, positives=positives, negatives=negatives,
        strategy="distill_gold_plus_lerc",
        metadata={"distill_gold": dg.metadata, "lerc": lerc.metadata},
    )


def filter_empty(examples: Sequence[ContrastiveExample]) -> list[ContrastiveExample]:
    """Drop examples whose positive or negative side is empty."""
    return [ex for ex in examples if ex.is_trainable]


def explode_tuples(example: ContrastiveExample) -> list[TrainTuple]:
    """Cartesian product of positives and negatives, one tuple per pair."""
    return [
        TrainTuple(query=example.query, positive=pos, negative=neg)
        for pos in example.positives
        for neg in example.negatives
    ]


def compute_stats(examples: Sequence[ContrastiveExample]) -> DatasetStats:
    if not examples:
        raise InvalidArgumentError("cannot compute stats over zero examples")
    n = len(examples)
    return DatasetStats(
        n_examples=n,
        mean_pos=sum(len(ex.positives) for ex in examples) / n,
        mean_neg=sum(len(ex.negatives) for ex in examples) / n,
        strategy=examples[0].strategy,
    )


def generate_examples(
    dataset: Dataset,
    strategy: str,
    clients,
    k: int = 10,
    l: int = 5,
    bm25_params: Bm25Params | None = None,
    chunk_config: ChunkConfig | None = None,
) -> list[ContrastiveExample]:
    """Run one strategy over every (claim, subquestion) of a dataset.

    Output order follows (claim_id, q_index) regardless of generation
    order. Pairs without any articles yield empty examples, which the
    filter stage removes. Returned examples are unfiltered.
    """
    if strategy not in STRATEGIES:
        raise InvalidArgumentError(f"unknown strategy {strategy!r}")
    examples: list[ContrastiveExample] = []
    for claim, subq in dataset.iter_queries():
        query = make_query(claim, subq)
        docset = build_document_set(
            claim,
            subq,
            dataset.wild_articles_for(claim.claim_id, subq.q_index),
            dataset.gold_article_for(claim.claim_id, subq.q_index),
            chunk_config,
        )
        candidates = select_candidates(query, docset, k=k, l=l, params=bm25_params)
        examples.append(
            _dispatch(strategy, query, candidates, clients, claim, subq)
        )
    return examples


def _dispatch(
    strategy: str,
    query: Query,
    candidates: CandidateSets,
    clients,
    claim: ClaimRecord,
    subq: SubQuestion,
) -> ContrastiveExample:
    if strategy == "gold":
        return gen_gold(query, candidates)
    if strategy == "distill":
        return gen_distill(query, candidates, clients.judge_relevance, claim.text, subq.text)
    if strategy == "distill_gold":
        return gen_distill_gold(
            query, candidates, clients.judge_relevance, claim.text, subq.text
        )
    if strategy == "lerc":
        return gen_lerc(
            query, candidates, clients.read_answer, clients.shorten_answer,
            clients.score_equivalence, subq.gold_answer, claim.text, subq.text,
        )
    return gen_cfr(
        query, candidates, clients.judge_relevance, clients.read_answer,
        clients.shorten_answer, clients.score_equivalence, subq.gold_answer,
        claim.text, subq.text,
    )


def save_examples(
    examples: Sequence[ContrastiveExample],
    path: str | Path,
    config_digest: str = "",
) -> None:
    """Write a training set: one header line, then one example per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    strategy = examples[0].strategy if examples else ""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": "factrank-trainset",
            "strategy": strategy,
            "config_digest": config_digest,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ex in examples:
            record = {
                "claim_id": ex.query.claim_id,
                "q_index": ex.query.q_index,
                "query_text": ex.query.text,
                "strategy": ex.strategy,
                "positives": [s.to_dict() for s in ex.positives],
                "negatives": [s.to_dict() for s in ex.negatives],
                "metadata": ex.metadata,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def load_examples(path: str | Path) -> tuple[list[ContrastiveExample], dict]:
    path = Path(path)
    examples: list[ContrastiveExample] = []
    header: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if line_no == 1 and record.get("format") == "factrank-trainset":
                header = record
                continue
            try:
                examples.append(
                    ContrastiveExample(
                        query=Query(
                            claim_id=record["claim_id"],
                            q_index=record["q_index"],
                            text=record["query_text"],
                        ),
                        positives=[DocumentSpan.from_dict(d) for d in record["positives"]],
                        negatives=[DocumentSpan.from_dict(d) for d in record["negatives"]],
                        strategy=record["strategy"],
                        metadata=record.get("metadata", {}),
                    )
                )
            except KeyError as exc:
                raise DatasetSchemaError(path, line_no, f"missing field {exc}") from exc
    return examples, header
