"""Clients for the embedding, judge, and generation endpoints.

Two interchangeable implementations share one surface:

* ``HttpClient`` speaks the JSON wire protocol (POST /embed, /judge/*,
  /generate/synthetic) with bounded retries, an optional bearer token, and
  a persistent on-disk response cache. Prompt templates are shipped as
  versioned text assets and sent verbatim under ``prompt_template`` so a
  real provider can reproduce the intended prompts.
* ``MockClient`` is a fully deterministic offline stand-in: hash-based
  embeddings, token-overlap judges, extractive reading, and templated
  synthetic generation. Two runs with the same inputs are byte-identical.

Embeddings are returned as float64 numpy arrays of shape (n, dim); the
vector dimension is fixed per client session and enforced on every call.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .errors import (
    GenerationProtocolError,
    InvalidArgumentError,
    JudgeProtocolError,
    ProtocolError,
    TransportError,
)

logger = logging.getLogger(__name__)

PROMPT_VERSIONS = {
    "relevance": "relevance_v1.txt",
    "qa": "qa_v1.txt",
    "veracity": "veracity_fever_v1.txt",
    "synthetic": "synthetic_v1.txt",
}

FEVER_LABELS = ("SUPPORTS", "REFUTES", "NOT ENOUGH INFO")

_WORD_RE = re.compile(r"[\w']+")

_STOPWORDS = frozenset(
    "the and was were did does has have had that this with for are is what "
    "when where who why how which there their from into does been being".split()
)


def load_prompt_template(name: str) -> str:
    """Read one of the bundled prompt assets (relevance, qa, veracity, synthetic)."""
    filename = PROMPT_VERSIONS[name]
    return resources.files("factrank.prompts").joinpath(filename).read_text(encoding="utf-8")


def _words(text: str) -> list[str]:
    return [w.lower() for w in _WORD_RE.findall(text)]


def content_words(text: str) -> set[str]:
    """Lowercased alphanumeric tokens, length >= 3, minus a small stopword set."""
    return {w for w in _words(text) if len(w) >= 3 and w not in _STOPWORDS}


@dataclass
class JudgeVerdict:
    relevant: bool
    raw_response: str  # normalized to exactly "Yes" or "No"


@dataclass
class ReaderAnswer:
    answer: str
    short_answer: Optional[str] = None


@dataclass
class EquivalenceScore:
    score: float  # in [0, 1]


@dataclass
class VeracityLabel:
    label: str


@dataclass
class SyntheticPayload:
    """Raw output of /generate/synthetic before structural validation."""

    positive: str
    hard_negative: str
    alt_questions: list[dict]  # [{"question": ..., "negative": ...}] * 4
    explanation: str


@dataclass
class CacheEntry:
    request_hash: str
    endpoint: str
    response: bytes
    created_at: float


def request_hash(endpoint: str, body: dict) -> str:
    """Stable hash of (endpoint, canonicalized request body)."""
    canonical = json.dumps(body, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(f"{endpoint}\n{canonical}".encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed file cache: one {request_hash}.json per entry.

    Entries survive process restarts; a corrupted file is treated as a miss
    with a warning. Enabling the cache never changes responses, only latency.
    """

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def get(self, endpoint: str, body: dict) -> Optional[bytes]:
        key = request_hash(endpoint, body)
        path = self._path(key)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            if entry["request_hash"] != key or entry["endpoint"] != endpoint:
                raise ValueError("entry does not match its key")
            return entry["response"].encode("utf-8")
        except (ValueError, KeyError, OSError) as exc:
            logger.warning("cache entry %s is corrupted (%s); treating as miss", path.name, exc)
            return None

    def put(self, endpoint: str, body: dict, response: bytes) -> CacheEntry:
        key = request_hash(endpoint, body)
        entry = CacheEntry(
            request_hash=key,
            endpoint=endpoint,
            response=bytes(response),
            created_at=time.time(),
        )
        payload = {
            "request_hash": entry.request_hash,
            "endpoint": entry.endpoint,
            "response": entry.response.decode("utf-8"),
            "created_at": entry.created_at,
        }
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
        tmp.replace(self._path(key))
        return entry


class HashEmbedder:
    """Deterministic test-double embedder: signed feature hashing.

    Token unigrams and bigrams are hashed (blake2b, no process salt) into
    ``dim`` signed buckets; the resulting vector is L2-normalized. Equal
    texts always embed identically, across processes and platforms.
    """

    source_model = "hash-mock"

    def __init__(self, dim: int = 128):
        if dim <= 0:
            raise InvalidArgumentError(f"dim must be > 0, got {dim}")
        self.dim = dim

    @staticmethod
    def features(text: str) -> list[str]:
        tokens = _words(text)
        return tokens + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]

    def bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "big")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self.dim, sign

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            if not text or not text.strip():
                raise InvalidArgumentError(f"cannot embed empty text at position {i}")
            for feature in self.features(text):
                idx, sign = self.bucket(feature)
                out[i, idx] += sign
            norm = np.linalg.norm(out[i])
            if norm == 0.0:
                raise InvalidArgumentError(f"text at position {i} produced no features")
            out[i] /= norm
        return out


class MockClient:
    """Offline deterministic provider; the default for tests and CI.

    Judge rules (documented so fixtures can target them):

    * relevance: Yes iff the passage contains at least half of the
      question's content words (and at least one).
    * reading: text after an ``answer:`` marker if the passage has one,
      else the passage sentence with the highest question-word overlap.
    * shortening: text after the last colon, else the answer unchanged.
    * equivalence: token F1 between the two shortened strings.
    * veracity: claim contained verbatim in the evidence -> supports;
      negation marker plus half the claim's content words -> refutes;
      otherwise the not-enough-info label.
    """

    def __init__(self, dim: int = 128):
        self._embedder = HashEmbedder(dim=dim)
        self.calls: dict[str, int] = {}

    @property
    def dim(self) -> int:
        return self._embedder.dim

    @property
    def source_model(self) -> str:
        return self._embedder.source_model

    def _count(self, endpoint: str) -> None:
        self.calls[endpoint] = self.calls.get(endpoint, 0) + 1

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self._count("embed")
        return self._embedder.embed(texts)

    def judge_relevance(self, claim: str, question: str, passage: str) -> JudgeVerdict:
        self._count("judge_relevance")
        _require_nonempty(claim=claim, question=question, passage=passage)
        needed = content_words(question)
        if not needed:
            return JudgeVerdict(relevant=False, raw_response="No")
        overlap = len(needed & content_words(passage)) / len(needed)
        relevant = overlap >= 0.5
        return JudgeVerdict(relevant=relevant, raw_response="Yes" if relevant else "No")

    def read_answer(self, claim: str, question: str, passage: str) -> ReaderAnswer:
        self._count("read_answer")
        _require_nonempty(claim=claim, question=question, passage=passage)
        marker = re.search(r"answer:\s*([^.]+)", passage, flags=re.IGNORECASE)
        if marker:
            return ReaderAnswer(answer=marker.group(1).strip())
        sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", passage) if s.strip()]
        if not sentences:
            sentences = [passage.strip()]
        needed = content_words(question)
        best = max(sentences, key=lambda s: (len(needed & content_words(s)), -sentences.index(s)))
        return ReaderAnswer(answer=" ".join(best.split()[:30]))

    def shorten_answer(self, answer: str) -> str:
        self._count("shorten_answer")
        if not answer or not answer.strip():
            raise InvalidArgumentError("cannot shorten an empty answer")
        if ":" in answer:
            tail = answer.rsplit(":", 1)[1].strip().rstrip(".")
            if tail:
                return tail
        return answer.strip().rstrip(".")

    def score_equivalence(self, gold_short: str, candidate_short: str,
                          question: str = "") -> EquivalenceScore:
        self._count("score_equivalence")
        _require_nonempty(gold_short=gold_short, candidate_short=candidate_short)
        gold_tokens = _words(gold_short)
        cand_tokens = _words(candidate_short)
        if not gold_tokens or not cand_tokens:
            return EquivalenceScore(score=0.0)
        common = 0
        remaining = dict()
        for tok in gold_tokens:
            remaining[tok] = remaining.get(tok, 0) + 1
        for tok in cand_tokens:
            if remaining.get(tok, 0) > 0:
                remaining[tok] -= 1
                common += 1
        f1 = 2.0 * common / (len(gold_tokens) + len(cand_tokens))
        return EquivalenceScore(score=min(1.0, max(0.0, f1)))

    def judge_veracity(self, claim: str, evidence: str,
                       label_set: Sequence[str] = FEVER_LABELS) -> VeracityLabel:
        self._count("judge_veracity")
        _require_nonempty(claim=claim, evidence=evidence)
        if not label_set:
            raise InvalidArgumentError("label_set must be non-empty")
        claim_norm = " ".join(_words(claim))
        evidence_norm = " ".join(_words(evidence))
        supports = _pick_label(label_set, "support", 0)
        refutes = _pick_label(label_set, "refut", min(1, len(label_set) - 1))
        nei = _pick_label(label_set, "not enough", len(label_set) - 1)
        if claim_norm and claim_norm in evidence_norm:
            return VeracityLabel(label=supports)
        needed = content_words(claim)
        negated = {"not", "no", "never", "false"} & set(_words(evidence))
        if needed and negated and len(needed & content_words(evidence)) / len(needed) >= 0.5:
            return VeracityLabel(label=refutes)
        return VeracityLabel(label=nei)

    def generate_synthetic(self, claim: str, question: str) -> SyntheticPayload:
        self._count("generate_synthetic")
        _require_nonempty(claim=claim, question=question)
        digest = hashlib.blake2b(f"{claim}\n{question}".encode("utf-8"),
                                 digest_size=4).hexdigest()
        topic = " ".join(sorted(content_words(question))[:4]) or "the subject"
        positive = (
            f"Records filed under case sig{digest} describe circumstances from which a "
            f"careful reader can settle the matter of {topic} after one inferential step."
        )
        hard_negative = (
            f"Commentators have discussed {topic} at length, reviewing the public debate "
            f"and the people involved, without ever stating the decisive fact."
        )
        alt_questions = []
        for i in range(4):
            alt_questions.append(
                {
                    "question": f"What is known about aspect {i + 1} of {topic}?",
                    "negative": (
                        f"A separate report alt{i}{digest} covers aspect {i + 1} of {topic} "
                        f"in detail, answering a different question entirely."
                    ),
                }
            )
        explanation = (
            f"The first paragraph implies the answer via case sig{digest}; the second "
            f"only appears relevant; the rest answer alternate questions."
        )
        return SyntheticPayload(
            positive=positive,
            hard_negative=hard_negative,
            alt_questions=alt_questions,
            explanation=explanation,
        )


def _require_nonempty(**fields: str) -> None:
    for name, value in fields.items():
        if not value or not value.strip():
            raise InvalidArgumentError(f"{name} must be non-empty")


def _pick_label(label_set: Sequence[str], needle: str, fallback_index: int) -> str:
    for label in label_set:
        if needle in label.lower():
            return label
    return label_set[fallback_index]


def parse_yes_no(raw) -> JudgeVerdict:
    """Normalize a judge response to exactly Yes/No; anything else is an error."""
    if isinstance(raw, bool):
        return JudgeVerdict(relevant=raw, raw_response="Yes" if raw else "No")
    if isinstance(raw, str):
        normalized = raw.strip().strip(".!\"'").lower()
        if normalized == "yes":
            return JudgeVerdict(relevant=True, raw_response="Yes")
        if normalized == "no":
            return JudgeVerdict(relevant=False, raw_response="No")
    raise JudgeProtocolError(f"expected Yes/No, got {raw!r}", raw_response=str(raw))


@dataclass
class ClientConfig:
    base_url: str = "mock"
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5
    parallelism: int = 8
    batch_size: int = 32
    token: Optional[str] = None
    embed_dim: int = 128  # used by the mock embedder only

    def __post_init__(self):
        if self.retries < 1:
            raise InvalidArgumentError("retries must be >= 1")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.parallelism < 1:
            raise InvalidArgumentError("parallelism must be >= 1")


class HttpClient:
    """JSON-over-HTTP provider client with retries and optional caching."""

    def __init__(self, config: ClientConfig, cache: Optional[ResponseCache] = None,
                 session: Optional[requests.Session] = None):
        self.config = config
        self.cache = cache
        self.session = session or requests.Session()
        self.base_url = config.base_url.rstrip("/")
        self._dim: Optional[int] = None
        self.source_model = self.base_url

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    def _post(self, endpoint: str, body: dict) -> dict:
        if self.cache is not None:
            hit = self.cache.get(endpoint, body)
            if hit is not None:
                return json.loads(hit.decode("utf-8"))

        headers = {"Content-Type": "application/json"}
        if self.config.token:
            headers["Authorization"] = f"Bearer {self.config.token}"
        url = f"{self.base_url}{endpoint}"
        last_error: Exception | None = None
        for attempt in range(self.config.retries):
            if attempt:
                time.sleep(self.config.backoff * (2 ** (attempt - 1)))
            try:
                response = self.session.post(
                    url, json=body, headers=headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("POST %s failed (attempt %d/%d): %s",
                               endpoint, attempt + 1, self.config.retries, exc)
                continue
            if response.status_code >= 500:
                last_error = TransportError(
                    f"POST {endpoint} -> {response.status_code}"
                )
                logger.warning("POST %s -> %d (attempt %d/%d)",
                               endpoint, response.status_code, attempt + 1,
                               self.config.retries)
                continue
            if response.status_code >= 400:
                raise ProtocolError(
                    f"POST {endpoint} rejected: {response.status_code} {response.text[:200]}"
                )
            try:
                payload = response.json()
            except ValueError as exc:
                raise ProtocolError(f"POST {endpoint}: response is not JSON") from exc
            if self.cache is not None:
                self.cache.put(endpoint, body, response.content)
            return payload
        raise TransportError(
            f"POST {endpoint} failed after {self.config.retries} attempts: {last_error}"
        )

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for i, text in enumerate(texts):
            if not text or not text.strip():
                raise InvalidArgumentError(f"cannot embed empty text at position {i}")
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.config.batch_size):
            batch = list(texts[start : start + self.config.batch_size])
            try:
                payload = self._post("/embed", {"texts": batch})
            except TransportError as exc:
                raise TransportError(
                    f"embedding batch at offset {start} (size {len(batch)}) failed: {exc}"
                ) from exc
            try:
                embeddings = payload["embeddings"]
                dim = int(payload["dim"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"/embed: malformed response: {exc}") from exc
            if len(embeddings) != len(batch):
                raise ProtocolError(
                    f"/embed returned {len(embeddings)} vectors for {len(batch)} texts"
                )
            if self._dim is None:
                self._dim = dim
            elif dim != self._dim:
                raise ProtocolError(
                    f"/embed dimension changed within session: {self._dim} -> {dim}"
                )
            rows.extend(embeddings)
        out = np.asarray(rows, dtype=np.float64)
        if out.size and not np.all(np.isfinite(out)):
            raise ProtocolError("/embed returned non-finite values")
        return out.reshape(len(texts), -1) if len(texts) else out

    def judge_relevance(self, claim: str, question: str, passage: str) -> JudgeVerdict:
        _require_nonempty(claim=claim, question=question, passage=passage)
        payload = self._post(
            "/judge/relevance",
            {
                "claim": claim,
                "question": question,
                "passage": passage,
                "prompt_template": load_prompt_template("relevance"),
            },
        )
        if "relevant" not in payload:
            raise JudgeProtocolError("missing 'relevant' field", raw_response=str(payload))
        return parse_yes_no(payload["relevant"])

    def read_answer(self, claim: str, question: str, passage: str) -> ReaderAnswer:
        _require_nonempty(claim=claim, question=question, passage=passage)
        payload = self._post(
            "/judge/answer",
            {
                "claim": claim,
                "question": question,
                "passage": passage,
                "prompt_template": load_prompt_template("qa"),
            },
        )
        answer = payload.get("answer")
        if not isinstance(answer, str) or not answer.strip():
            raise ProtocolError(f"/judge/answer: missing answer in {payload!r}")
        short = payload.get("short_answer")
        return ReaderAnswer(answer=answer, short_answer=short)

    def shorten_answer(self, answer: str) -> str:
        _require_nonempty(answer=answer)
        payload = self._post("/judge/shorten", {"answer": answer})
        short = payload.get("short_answer")
        if not isinstance(short, str) or not short.strip():
            raise ProtocolError(f"/judge/shorten: missing short_answer in {payload!r}")
        return short

    def score_equivalence(self, gold_short: str, candidate_short: str,
                          question: str = "") -> EquivalenceScore:
        _require_nonempty(gold_short=gold_short, candidate_short=candidate_short)
        payload = self._post(
            "/judge/equivalence",
            {"gold": gold_short, "candidate": candidate_short, "question": question},
        )
        try:
            score = float(payload["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"/judge/equivalence: malformed response: {exc}") from exc
        return EquivalenceScore(score=min(1.0, max(0.0, score)))

    def judge_veracity(self, claim: str, evidence: str,
                       label_set: Sequence[str] = FEVER_LABELS) -> VeracityLabel:
        _require_nonempty(claim=claim, evidence=evidence)
        payload = self._post(
            "/judge/veracity",
            {
                "claim": claim,
                "evidence": evidence,
                "labels": list(label_set),
                "prompt_template": load_prompt_template("veracity"),
            },
        )
        label = payload.get("label")
        if label not in set(label_set):
            raise JudgeProtocolError(
                f"label {label!r} outside label set {list(label_set)!r}",
                raw_response=str(payload),
            )
        return VeracityLabel(label=label)

    def generate_synthetic(self, claim: str, question: str) -> SyntheticPayload:
        _require_nonempty(claim=claim, question=question)
        payload = self._post(
            "/generate/synthetic",
            {
                "claim": claim,
                "question": question,
                "prompt_template": load_prompt_template("synthetic"),
            },
        )
        missing = [k for k in ("positive", "hard_negative", "alt_questions", "explanation")
                   if not payload.get(k)]
        if missing:
            raise GenerationProtocolError(
                f"/generate/synthetic: missing {', '.join(missing)}"
            )
        return SyntheticPayload(
            positive=payload["positive"],
            hard_negative=payload["hard_negative"],
            alt_questions=payload["alt_questions"],
            explanation=payload["explanation"],
        )


def make_client(config: ClientConfig, cache_dir: str | Path | None = None):
    """Build the provider client named by config.base_url ("mock" or a URL)."""
    if config.base_url == "mock":
        return MockClient(dim=config.embed_dim)
    cache = ResponseCache(cache_dir) if cache_dir else None
    return HttpClient(config, cache=cache)
