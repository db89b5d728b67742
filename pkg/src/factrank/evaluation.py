"""Retrieval and veracity metrics, paired bootstrap, synthetic benchmark.

Per-example metric values live on a [0, 1] scale; report means are plain
arithmetic means over included items. Items that cannot be scored are
excluded and counted (``unanswerable`` when required inputs are missing,
``errored`` when a client call fails), never silently imputed. Reports
serialize to canonical JSON (sorted keys) so identical runs are
byte-identical.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .clients import FEVER_LABELS
from .corpus import (
    ChunkConfig,
    ClaimRecord,
    Dataset,
    DocumentSet,
    DocumentSpan,
    Query,
    SubQuestion,
    build_document_set,
    make_query,
)
from .errors import (
    DatasetParseError,
    FactrankError,
    GenerationProtocolError,
    InvalidArgumentError,
)
from .reranker import Adapter, RankedList, rank

METRICS = ("equivalence", "top_doc_relevance", "gold_at_10", "veracity")

LABEL_SETS = {
    "fever": FEVER_LABELS,
    "fixture": FEVER_LABELS,
    "synthetic": FEVER_LABELS,
    "hotpotqa": FEVER_LABELS,
    "claimdecomp": FEVER_LABELS,
    "averitec": (
        "Supported",
        "Refuted",
        "Not Enough Evidence",
        "Conflicting Evidence/Cherrypicking",
    ),
}


@dataclass
class Retriever:
    """An adapter plus the embedding client it scores with."""

    adapter: Adapter
    embed_client: object

    def rank(self, query, docset: DocumentSet) -> RankedList:
        return rank(query, docset, self.adapter, self.embed_client)

    def top_span(self, query, docset: DocumentSet) -> DocumentSpan:
        ranked = self.rank(query, docset)
        top_id = ranked.entries[0][0]
        for span in docset.spans:
            if span.doc_id == top_id:
                return span
        raise InvalidArgumentError(f"top doc {top_id!r} missing from document set")


@dataclass
class MetricOutcome:
    value: Optional[float] = None
    excluded: Optional[str] = None  # "unanswerable" | "errored"


def metric_equivalence(
    claim: ClaimRecord,
    subq: SubQuestion,
    docset: DocumentSet,
    retriever: Retriever,
    reader,
    shortener,
    scorer,
) -> MetricOutcome:
    """Equivalence of the answer read from the top document vs. the gold answer."""
    if not subq.gold_answer:
        return MetricOutcome(excluded="unanswerable")
    try:
        query = make_query(claim, subq)
        top = retriever.top_span(query, docset)
        answer = reader(claim.text, subq.text, top.text)
        gold_short = shortener(subq.gold_answer)
        cand_short = shortener(answer.answer)
        score = scorer(gold_short, cand_short, subq.text).score
    except FactrankError:
        return MetricOutcome(excluded="errored")
    return MetricOutcome(value=min(1.0, max(0.0, score)))


def metric_top_doc_relevance(
    claim: ClaimRecord,
    subq: SubQuestion,
    docset: DocumentSet,
    retriever: Retriever,
    relevance_judge,
) -> MetricOutcome:
    try:
        query = make_query(claim, subq)
        top = retriever.top_span(query, docset)
        verdict = relevance_judge(claim.text, subq.text, top.text)
    except FactrankError:
        return MetricOutcome(excluded="errored")
    return MetricOutcome(value=1.0 if verdict.relevant else 0.0)


def metric_gold_at_10(
    claim: ClaimRecord,
    subq: SubQuestion,
    docset: DocumentSet,
    retriever: Retriever,
) -> MetricOutcome:
    gold_ids = {span.doc_id for span in docset.spans if span.is_gold}
    try:
        query = make_query(claim, subq)
        ranked = retriever.rank(query, docset)
    except FactrankError:
        return MetricOutcome(excluded="errored")
    top10 = set(ranked.doc_ids()[:10])
    return MetricOutcome(value=1.0 if gold_ids & top10 else 0.0)


def metric_veracity(
    claim: ClaimRecord,
    subq: SubQuestion,
    docset: DocumentSet,
    retriever: Retriever,
    veracity_judge,
    label_set: Sequence[str],
) -> MetricOutcome:
    """Single-document veracity: judge the top reranked span against the label."""
    if not claim.veracity_label:
        return MetricOutcome(excluded="unanswerable")
    try:
        query = make_query(claim, subq)
        top = retriever.top_span(query, docset)
        predicted = veracity_judge(claim.text, top.text, label_set)
    except FactrankError:
        return MetricOutcome(excluded="errored")
    return MetricOutcome(value=1.0 if predicted.label == claim.veracity_label else 0.0)


def metric_mrr(ranked_sets: Sequence[tuple[RankedList, str]]) -> float:
    """Mean reciprocal rank of the designated positive document."""
    if not ranked_sets:
        raise InvalidArgumentError("need at least one ranked set")
    total = 0.0
    for ranked, positive_id in ranked_sets:
        ids = ranked.doc_ids()
        if positive_id not in ids:
            raise InvalidArgumentError(f"positive doc {positive_id!r} not in ranked list")
        total += 1.0 / (ids.index(positive_id) + 1)
    return total / len(ranked_sets)


@dataclass
class BootstrapResult:
    p_estimate: float
    significant: bool
    alpha: float
    resamples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "p": self.p_estimate,
            "significant": self.significant,
            "alpha": self.alpha,
            "resamples": self.resamples,
            "seed": self.seed,
        }


def paired_bootstrap(
    items_a: Sequence[float],
    items_b: Sequence[float],
    n_resamples: int = 10000,
    alpha: float = 0.05,
    seed: int = 0,
) -> BootstrapResult:
    """One-sided paired bootstrap of the mean difference (b claimed better).

    p is the fraction of resamples (paired indices drawn with replacement)
    in which mean(b) - mean(a) <= 0.
    """
    a = np.asarray(items_a, dtype=np.float64)
    b = np.asarray(items_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise InvalidArgumentError(
            f"paired bootstrap needs two equal-length series, got {a.shape} vs {b.shape}"
        )
    diffs = b - a
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, size=(n_resamples, diffs.size))
    resampled_means = diffs[idx].mean(axis=1)
    p = float(np.mean(resampled_means <= 0.0))
    return BootstrapResult(
        p_estimate=p,
        significant=bool(p < alpha),
        alpha=alpha,
        resamples=n_resamples,
        seed=seed,
    )


@dataclass
class EvalReport:
    n_input: int
    metrics: dict[str, dict] = field(default_factory=dict)
    items: dict[str, list] = field(default_factory=dict)  # metric -> [[cid, qidx, v]]
    significance: dict[str, dict] = field(default_factory=dict)
    config_digest: str = ""

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "metrics": self.metrics,
            "items": self.items,
            "significance": self.significance,
            "config_digest": self.config_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            n_input=d["n_input"],
            metrics=d.get("metrics", {}),
            items=d.get("items", {}),
            significance=d.get("significance", {}),
            config_digest=d.get("config_digest", ""),
        )


def _aggregate(
    per_metric: dict[str, list],
    n_input: int,
    baseline: Optional[EvalReport],
    alpha: float,
    resamples: int,
    seed: int,
    config_digest: str,
) -> EvalReport:
    report = EvalReport(n_input=n_input, config_digest=config_digest)
    for metric, rows in per_metric.items():
        included = [(cid, qidx, v) for cid, qidx, v, excl in rows if excl is None]
        excluded_unanswerable = sum(1 for *_, excl in rows if excl == "unanswerable")
        excluded_errored = sum(1 for *_, excl in rows if excl == "errored")
        values = [v for _, _, v in included]
        report.metrics[metric] = {
            "mean": (sum(values) / len(values)) if values else None,
            "n": len(values),
            "excluded_unanswerable": excluded_unanswerable,
            "excluded_errored": excluded_errored,
        }
        report.items[metric] = [[cid, qidx, v] for cid, qidx, v in included]
    if baseline is not None:
        for metric, rows in report.items.items():
            base_rows = baseline.items.get(metric)
            if base_rows is None:
                continue
            if [r[:2] for r in base_rows] != [r[:2] for r in rows]:
                raise InvalidArgumentError(
                    f"baseline items for {metric!r} do not pair with this run "
                    f"({len(base_rows)} vs {len(rows)} items)"
                )
            result = paired_bootstrap(
                [r[2] for r in base_rows],
                [r[2] for r in rows],
                n_resamples=resamples,
                alpha=alpha,
                seed=seed,
            )
            entry = result.to_dict()
            entry["baseline_mean"] = baseline.metrics[metric]["mean"]
            report.significance[metric] = entry
    return report


def run_eval(
    dataset: Dataset,
    clients,
    adapter: Adapter,
    metric_set: Sequence[str] = METRICS,
    n_examples: int = 200,
    alpha: float = 0.05,
    resamples: int = 10000,
    seed: int = 0,
    baseline: Optional[EvalReport] = None,
    chunk_config: Optional[ChunkConfig] = None,
    label_set: Optional[Sequence[str]] = None,
    config_digest: str = "",
) -> EvalReport:
    """Evaluate a retriever configuration over a seeded sample of a dataset.

    The sample is drawn from answerable pairs (subquestions with a gold
    answer) when any exist, otherwise from all pairs; it is then processed
    in (claim_id, q_index) order so aggregation is deterministic.
    """
    unknown = set(metric_set) - set(METRICS)
    if unknown:
        raise InvalidArgumentError(f"unknown metrics: {sorted(unknown)}")
    retriever = Retriever(adapter=adapter, embed_client=clients)

    pairs = list(dataset.iter_queries())
    answerable = [(c, s) for c, s in pairs if s.gold_answer]
    pool = answerable if answerable else pairs
    if len(pool) > n_examples:
        rng = np.random.default_rng(seed)
        chosen_idx = sorted(rng.choice(len(pool), size=n_examples, replace=False))
        pool = [pool[i] for i in chosen_idx]

    per_metric: dict[str, list] = {m: [] for m in metric_set}
    for claim, subq in pool:
        docset = build_document_set(
            claim,
            subq,
            dataset.wild_articles_for(claim.claim_id, subq.q_index),
            dataset.gold_article_for(claim.claim_id, subq.q_index),
            chunk_config,
        )
        labels = label_set or LABEL_SETS.get(claim.source_dataset, FEVER_LABELS)
        for metric in metric_set:
            if not docset.spans:
                outcome = MetricOutcome(excluded="errored")
            elif metric == "equivalence":
                outcome = metric_equivalence(
                    claim, subq, docset, retriever,
                    clients.read_answer, clients.shorten_answer, clients.score_equivalence,
                )
            elif metric == "top_doc_relevance":
                outcome = metric_top_doc_relevance(
                    claim, subq, docset, retriever, clients.judge_relevance
                )
            elif metric == "gold_at_10":
                outcome = metric_gold_at_10(claim, subq, docset, retriever)
            else:
                outcome = metric_veracity(
                    claim, subq, docset, retriever, clients.judge_veracity, labels
                )
            per_metric[metric].append(
                (claim.claim_id, subq.q_index, outcome.value, outcome.excluded)
            )
    return _aggregate(
        per_metric, len(pool), baseline, alpha, resamples, seed, config_digest
    )


def export_items_csv(report: EvalReport, path: str | Path) -> None:
    """Per-item scores as CSV: metric, claim_id, q_index, value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "claim_id", "q_index", "value"])
        for metric in sorted(report.items):
            for cid, qidx, value in report.items[metric]:
                writer.writerow([metric, cid, qidx, value])


# --- synthetic reasoning benchmark -------------------------------------


@dataclass
class AltNegative:
    question: str
    text: str


@dataclass
class SyntheticSet:
    """Six candidate documents for one claim/question: 1 positive, 5 negatives."""

    claim: str
    question: str
    positive: str
    hard_negative: str
    alt_negatives: list[AltNegative]
    explanation: str

    def documents(self) -> list[tuple[str, str]]:
        """(doc_id, text) pairs; ids are stable within the set."""
        docs = [("positive", self.positive), ("hard_negative", self.hard_negative)]
        docs.extend((f"alt_{i + 1}", alt.text) for i, alt in enumerate(self.alt_negatives))
        return docs

    def validate(self) -> "SyntheticSet":
        if len(self.alt_negatives) != 4:
            raise GenerationProtocolError(
                f"expected 4 alternate-question negatives, got {len(self.alt_negatives)}"
            )
        texts = [text for _, text in self.documents()]
        if any(not t or not t.strip() for t in texts):
            raise GenerationProtocolError("synthetic set contains an empty document")
        if len(set(texts)) != 6:
            raise GenerationProtocolError("synthetic set documents are not pairwise distinct")
        if any(not alt.question.strip() for alt in self.alt_negatives):
            raise GenerationProtocolError("alternate negative is missing its question")
        return self

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "question": self.question,
            "positive": self.positive,
            "hard_negative": self.hard_negative,
            "alt_negatives": [
                {"question": alt.question, "negative": alt.text}
                for alt in self.alt_negatives
            ],
            "explanation": self.explanation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSet":
        return cls(
            claim=d["claim"],
            question=d["question"],
            positive=d["positive"],
            hard_negative=d["hard_negative"],
            alt_negatives=[
                AltNegative(question=alt["question"], text=alt["negative"])
                for alt in d["alt_negatives"]
            ],
            explanation=d.get("explanation", ""),
        ).validate()


def build_synthetic_set(claim: str, question: str, generator_client) -> SyntheticSet:
    """Generate and structurally validate one six-document benchmark set."""
    payload = generator_client.generate_synthetic(claim, question)
    try:
        alts = [
            AltNegative(question=alt["question"], text=alt["negative"])
            for alt in payload.alt_questions
        ]
    except (KeyError, TypeError) as exc:
        raise GenerationProtocolError(f"malformed alt_questions: {exc}") from exc
    return SyntheticSet(
        claim=claim,
        question=question,
        positive=payload.positive,
        hard_negative=payload.hard_negative,
        alt_negatives=alts,
        explanation=payload.explanation,
    ).validate()


def _synthetic_query_text(claim: str, question: str) -> str:
    if not question or question == claim:
        return claim
    return f"{claim} {question}"


def eval_synthetic(
    sets: Sequence[SyntheticSet],
    clients,
    adapter: Adapter,
    alpha: float = 0.05,
    resamples: int = 10000,
    seed: int = 0,
    baseline: Optional[EvalReport] = None,
    config_digest: str = "",
) -> EvalReport:
    """Rank each set's six documents; report the positive document's MRR."""
    if not sets:
        raise InvalidArgumentError("need at least one synthetic set")
    retriever = Retriever(adapter=adapter, embed_client=clients)
    per_metric: dict[str, list] = {"mrr": []}
    for i, synthetic in enumerate(sets):
        synthetic.validate()
        set_id = f"synth{i:04d}"
        query = Query(claim_id=set_id, q_index=0,
                      text=_synthetic_query_text(synthetic.claim, synthetic.question))
        spans = [
            DocumentSpan(
                doc_id=doc_id, article_id=set_id, span_index=j,
                token_start=0, text=text, is_gold=False,
            )
            for j, (doc_id, text) in enumerate(synthetic.documents())
        ]
        docset = DocumentSet(claim_id=set_id, q_index=0, spans=spans)
        try:
            ranked = retriever.rank(query, docset)
            rr = 1.0 / (ranked.doc_ids().index("positive") + 1)
        except FactrankError:
            per_metric["mrr"].append((set_id, 0, None, "errored"))
            continue
        per_metric["mrr"].append((set_id, 0, rr, None))
    return _aggregate(
        per_metric, len(sets), baseline, alpha, resamples, seed, config_digest
    )


def save_synthetic_sets(
    sets: Sequence[SyntheticSet], path: str | Path, config_digest: str = ""
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": "factrank-synthetic", "config_digest": config_digest}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for synthetic in sets:
            fh.write(json.dumps(synthetic.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def load_synthetic_sets(path: str | Path) -> tuple[list[SyntheticSet], dict]:
    path = Path(path)
    sets: list[SyntheticSet] = []
    header: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if line_no == 1 and record.get("format") == "factrank-synthetic":
                header = record
                continue
            sets.append(SyntheticSet.from_dict(record))
    return sets, header
