"""Claim/question/document data model, article chunking, and dataset files.

A dataset pairs a claims file (one claim per line, subquestions nested)
with a sibling articles file keyed by (claim_id, q_index). Articles are
chunked into fixed-length token spans with a sliding stride; each span is
prefixed with the article title, and spans inherit the article's gold flag.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

from .errors import DatasetParseError, DatasetSchemaError, InvalidArgumentError

SOURCE_DATASETS = ("averitec", "claimdecomp", "fever", "hotpotqa", "synthetic", "fixture")

# Tokenizer contract: text in, word tokens out. Chunking reconstructs span
# text by joining tokens with spaces, so tokenizers must not drop content
# that matters downstream.
Tokenizer = Callable[[str], list[str]]


def whitespace_tokenize(text: str) -> list[str]:
    """Default tokenizer: split on Unicode whitespace, keep case."""
    return text.split()


@dataclass
class ClaimRecord:
    claim_id: str
    text: str
    source_dataset: str = "fixture"
    veracity_label: Optional[str] = None

    def __post_init__(self):
        if not self.claim_id:
            raise InvalidArgumentError("claim_id must be non-empty")
        if not self.text:
            raise InvalidArgumentError(f"claim {self.claim_id!r}: text must be non-empty")
        if self.source_dataset not in SOURCE_DATASETS:
            raise InvalidArgumentError(
                f"claim {self.claim_id!r}: unknown source_dataset {self.source_dataset!r}"
            )


@dataclass
class SubQuestion:
    claim_id: str
    q_index: int
    text: str
    gold_answer: Optional[str] = None

    def __post_init__(self):
        if self.q_index < 0:
            raise InvalidArgumentError("q_index must be >= 0")
        if not self.text:
            raise InvalidArgumentError(
                f"subquestion ({self.claim_id!r}, {self.q_index}): text must be non-empty"
            )


@dataclass
class Article:
    article_id: str
    title: str
    body: str
    is_gold: bool = False
    url: Optional[str] = None

    def __post_init__(self):
        if not self.body:
            raise InvalidArgumentError(f"article {self.article_id!r}: body must be non-empty")


@dataclass
class DocumentSpan:
    """A fixed-length, title-prefixed slice of one article."""

    doc_id: str
    article_id: str
    span_index: int
    token_start: int
    text: str
    is_gold: bool = False

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "article_id": self.article_id,
            "span_index": self.span_index,
            "token_start": self.token_start,
            "text": self.text,
            "is_gold": self.is_gold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentSpan":
        return cls(
            doc_id=d["doc_id"],
            article_id=d["article_id"],
            span_index=d["span_index"],
            token_start=d["token_start"],
            text=d["text"],
            is_gold=d["is_gold"],
        )


@dataclass
class DocumentSet:
    """All candidate spans for one (claim, subquestion): wild first, gold last."""

    claim_id: str
    q_index: int
    spans: list[DocumentSpan] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for span in self.spans:
            if span.doc_id in seen:
                raise InvalidArgumentError(
                    f"document set ({self.claim_id!r}, {self.q_index}): "
                    f"duplicate doc_id {span.doc_id!r}"
                )
            seen.add(span.doc_id)

    def __len__(self) -> int:
        return len(self.spans)


@dataclass
class Query:
    """The concatenated claim-plus-subquestion string fed to retrievers."""

    claim_id: str
    q_index: int
    text: str


@dataclass
class ChunkConfig:
    span_tokens: int = 200
    stride: int = 100

    def __post_init__(self):
        if self.span_tokens <= 0:
            raise InvalidArgumentError(f"span_tokens must be > 0, got {self.span_tokens}")
        if self.stride <= 0 or self.stride > self.span_tokens:
            raise InvalidArgumentError(
                f"stride must satisfy 0 < stride <= span_tokens, got {self.stride}"
            )


def chunk_article(
    article: Article,
    span_tokens: int = 200,
    stride: int = 100,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> list[DocumentSpan]:
    """Slice an article body into overlapping token spans.

    Spans start at token offsets 0, stride, 2*stride, ...; emission stops
    after the first span whose end reaches the last body token, so every
    token is covered at least once. The article title is prepended to each
    span's text. An empty body yields an empty list.
    """
    ChunkConfig(span_tokens=span_tokens, stride=stride)  # validates arguments
    tokens = tokenizer(article.body)
    if not tokens:
        return []

    spans: list[DocumentSpan] = []
    start = 0
    while True:
        body_slice = tokens[start : start + span_tokens]
        span_index = len(spans)
        text = f"{article.title} {' '.join(body_slice)}" if article.title else " ".join(body_slice)
        spans.append(
            DocumentSpan(
                doc_id=f"{article.article_id}#{span_index}",
                article_id=article.article_id,
                span_index=span_index,
                token_start=start,
                text=text,
                is_gold=article.is_gold,
            )
        )
        if start + span_tokens >= len(tokens):
            break
        start += stride
    return spans


def make_query(claim: ClaimRecord, subq: SubQuestion) -> Query:
    """Join claim and subquestion into the retrieval query string.

    Degenerate cases: when the subquestion equals the claim (claim-as-question
    datasets) the claim appears once, and an empty side elides the separator.
    """
    if claim.claim_id != subq.claim_id:
        raise InvalidArgumentError(
            f"claim_id mismatch: claim {claim.claim_id!r} vs subquestion {subq.claim_id!r}"
        )
    if subq.text == claim.text or not subq.text.strip():
        text = claim.text
    elif not claim.text.strip():
        text = subq.text
    else:
        text = f"{claim.text} {subq.text}"
    return Query(claim_id=claim.claim_id, q_index=subq.q_index, text=text)


def build_document_set(
    claim: ClaimRecord,
    subq: SubQuestion,
    wild_articles: Sequence[Article],
    gold_article: Optional[Article] = None,
    chunk_config: Optional[ChunkConfig] = None,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> DocumentSet:
    """Chunk wild articles then the gold article into one document set."""
    cfg = chunk_config or ChunkConfig()
    if gold_article is not None and not gold_article.is_gold:
        raise InvalidArgumentError(
            f"gold article {gold_article.article_id!r} is not flagged is_gold"
        )
    article_ids = [a.article_id for a in wild_articles]
    if gold_article is not None:
        article_ids.append(gold_article.article_id)
    if len(article_ids) != len(set(article_ids)):
        raise InvalidArgumentError(
            f"duplicate article_ids in document set ({claim.claim_id!r}, {subq.q_index})"
        )

    spans: list[DocumentSpan] = []
    for article in wild_articles:
        spans.extend(chunk_article(article, cfg.span_tokens, cfg.stride, tokenizer))
    if gold_article is not None:
        spans.extend(chunk_article(gold_article, cfg.span_tokens, cfg.stride, tokenizer))
    return DocumentSet(claim_id=claim.claim_id, q_index=subq.q_index, spans=spans)


@dataclass
class Dataset:
    """Immutable-after-load view of a claims file plus its articles file.

    articles are keyed by (claim_id, q_index); subquestions by claim_id,
    sorted by q_index.
    """

    claims: list[ClaimRecord] = field(default_factory=list)
    subquestions: dict[str, list[SubQuestion]] = field(default_factory=dict)
    articles: dict[tuple[str, int], list[Article]] = field(default_factory=dict)

    def claim_by_id(self, claim_id: str) -> ClaimRecord:
        for claim in self.claims:
            if claim.claim_id == claim_id:
                return claim
        raise KeyError(claim_id)

    def iter_queries(self) -> Iterator[tuple[ClaimRecord, SubQuestion]]:
        """Yield (claim, subquestion) pairs ordered by (claim_id, q_index)."""
        for claim in sorted(self.claims, key=lambda c: c.claim_id):
            for subq in self.subquestions.get(claim.claim_id, []):
                yield claim, subq

    def articles_for(self, claim_id: str, q_index: int) -> list[Article]:
        return self.articles.get((claim_id, q_index), [])

    def gold_article_for(self, claim_id: str, q_index: int) -> Optional[Article]:
        golds = [a for a in self.articles_for(claim_id, q_index) if a.is_gold]
        return golds[0] if golds else None

    def wild_articles_for(self, claim_id: str, q_index: int) -> list[Article]:
        return [a for a in self.articles_for(claim_id, q_index) if not a.is_gold]


def articles_path_for(claims_path: str | Path) -> Path:
    """Sibling articles file: claims at X.jsonl -> articles at X.articles.jsonl."""
    p = Path(claims_path)
    if p.suffix == ".jsonl":
        return p.with_suffix(".articles.jsonl")
    return Path(str(p) + ".articles.jsonl")


def _require(record: dict, key: str, path, line_no):
    if key not in record:
        raise DatasetSchemaError(path, line_no, f"missing required field {key!r}")
    return record[key]


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise DatasetSchemaError(path, line_no, "record is not a JSON object")
            yield line_no, record


def load_dataset(claims_path: str | Path, articles_path: str | Path | None = None) -> Dataset:
    """Load a dataset from its claims file and (optional) articles sibling."""
    claims_path = Path(claims_path)
    dataset = Dataset()
    seen_claims: set[str] = set()
    for line_no, record in _iter_jsonl(claims_path):
        claim_id = _require(record, "claim_id", claims_path, line_no)
        text = _require(record, "text", claims_path, line_no)
        if claim_id in seen_claims:
            raise DatasetSchemaError(claims_path, line_no, f"duplicate claim_id {claim_id!r}")
        seen_claims.add(claim_id)
        try:
            claim = ClaimRecord(
                claim_id=claim_id,
                text=text,
                source_dataset=record.get("source_dataset", "fixture"),
                veracity_label=record.get("veracity_label"),
            )
            subqs = []
            seen_q = set()
            for sub in record.get("subquestions", []):
                q_index = _require(sub, "q_index", claims_path, line_no)
                if not isinstance(q_index, int):
                    raise DatasetSchemaError(
                        claims_path, line_no, f"q_index must be an integer, got {q_index!r}"
                    )
                if q_index in seen_q:
                    raise DatasetSchemaError(
                        claims_path, line_no, f"duplicate q_index {q_index} in {claim_id!r}"
                    )
                seen_q.add(q_index)
                subqs.append(
                    SubQuestion(
                        claim_id=claim_id,
                        q_index=q_index,
                        text=_require(sub, "text", claims_path, line_no),
                        gold_answer=sub.get("gold_answer"),
                    )
                )
        except (InvalidArgumentError, TypeError) as exc:
            raise DatasetSchemaError(claims_path, line_no, str(exc)) from exc
        dataset.claims.append(claim)
        dataset.subquestions[claim_id] = sorted(subqs, key=lambda s: s.q_index)

    if articles_path is None:
        articles_path = articles_path_for(claims_path)
    articles_path = Path(articles_path)
    if articles_path.exists():
        for line_no, record in _iter_jsonl(articles_path):
            claim_id = _require(record, "claim_id", articles_path, line_no)
            q_index = _require(record, "q_index", articles_path, line_no)
            try:
                article = Article(
                    article_id=_require(record, "article_id", articles_path, line_no),
                    title=_require(record, "title", articles_path, line_no),
                    body=_require(record, "body", articles_path, line_no),
                    is_gold=record.get("is_gold", False),
                    url=record.get("url"),
                )
            except (InvalidArgumentError, TypeError) as exc:
                raise DatasetSchemaError(articles_path, line_no, str(exc)) from exc
            key = (claim_id, q_index)
            if article.is_gold and any(a.is_gold for a in dataset.articles.get(key, [])):
                raise DatasetSchemaError(
                    articles_path, line_no, f"second gold article for {key}"
                )
            dataset.articles.setdefault(key, []).append(article)
    return dataset


def save_dataset(dataset: Dataset, claims_path: str | Path,
                 articles_path: str | Path | None = None) -> None:
    """Write a dataset back out in canonical form (sorted keys, one object per line)."""
    claims_path = Path(claims_path)
    if articles_path is None:
        articles_path = articles_path_for(claims_path)
    claims_path.parent.mkdir(parents=True, exist_ok=True)

    with open(claims_path, "w", encoding="utf-8") as fh:
        for claim in dataset.claims:
            record = {
                "claim_id": claim.claim_id,
                "text": claim.text,
                "source_dataset": claim.source_dataset,
                "subquestions": [
                    {
                        "q_index": s.q_index,
                        "text": s.text,
                        **({"gold_answer": s.gold_answer} if s.gold_answer is not None else {}),
                    }
                    for s in dataset.subquestions.get(claim.claim_id, [])
                ],
            }
            if claim.veracity_label is not None:
                record["veracity_label"] = claim.veracity_label
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    with open(articles_path, "w", encoding="utf-8") as fh:
        for (claim_id, q_index), articles in sorted(dataset.articles.items()):
            for article in articles:
                record = {
                    "claim_id": claim_id,
                    "q_index": q_index,
                    "article_id": article.article_id,
                    "title": article.title,
                    "body": article.body,
                    "is_gold": article.is_gold,
                }
                if article.url is not None:
                    record["url"] = article.url
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
