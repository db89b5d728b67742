"""Dense reranking: a trainable linear adapter over frozen embeddings.

The adapter is a square matrix applied to both query and document vectors
before cosine scoring; a fresh adapter is the identity, so an untrained
ranker reproduces the raw-embedding ordering exactly.

Checkpoint file layout (versioned, round-trips bit-identically):

    magic   8 bytes  b"FRADAPT1"
    header  uint32 little-endian byte length, then UTF-8 JSON with
            {"format_version": 1, "embed_dim": e,
             "training_config_digest": str, "identity_init": bool}
    weights e*e float64 values, row-major, little-endian
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DocumentSet, Query
from .errors import CheckpointError, DegenerateInputError, InvalidArgumentError

CHECKPOINT_MAGIC = b"FRADAPT1"
CHECKPOINT_VERSION = 1


@dataclass
class Adapter:
    """Square linear map applied to frozen embeddings on both sides."""

    weights: np.ndarray
    identity_init: bool = True
    training_config_digest: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.weights.shape[1]:
            raise InvalidArgumentError(
                f"adapter weights must be square, got shape {self.weights.shape}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise InvalidArgumentError("adapter weights contain non-finite entries")

    @property
    def embed_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Adapter":
        if dim <= 0:
            raise InvalidArgumentError(f"dim must be > 0, got {dim}")
        return cls(weights=np.eye(dim), identity_init=True)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Matrix-vector product; accepts a single vector or a (n, e) batch."""
        vectors = np.asarray(vectors, dtype=np.float64)
        return vectors @ self.weights.T


def apply_adapter(adapter: Adapter, vector: np.ndarray) -> np.ndarray:
    return adapter.apply(vector)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|), clipped into [-1, 1]; zero vectors are rejected."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass
class RankedList:
    """Documents of one set ordered by descending score, doc_id tie-break."""

    query_ref: tuple[str, int]
    entries: list[tuple[str, float]] = field(default_factory=list)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]


def rank(query: Query, docset: DocumentSet, adapter: Adapter, embed_client) -> RankedList:
    """Embed query and spans, adapt both sides, sort by cosine similarity.

    Scores are quantized to 12 decimals before sorting so the ordering
    (including the doc_id tie-break) is stable against float noise, e.g.
    under a positive rescaling of every embedding.
    """
    if not docset.spans:
        raise InvalidArgumentError(
            f"cannot rank an empty document set ({docset.claim_id!r}, {docset.q_index})"
        )
    texts = [query.text] + [span.text for span in docset.spans]
    embeddings = embed_client.embed(texts)
    adapted = adapter.apply(embeddings)
    query_vec = adapted[0]
    scored = [
        (span.doc_id, round(cosine(query_vec, adapted[i + 1]), 12))
        for i, span in enumerate(docset.spans)
    ]
    scored.sort(key=lambda entry: (-entry[1], entry[0]))
    return RankedList(query_ref=(query.claim_id, query.q_index), entries=scored)


def top1(ranked: RankedList) -> str:
    if not ranked.entries:
        raise InvalidArgumentError("ranked list is empty")
    return ranked.entries[0][0]


def save_checkpoint(adapter: Adapter, path: str | Path) -> None:
    """Write the adapter atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(
        {
            "format_version": CHECKPOINT_VERSION,
            "embed_dim": adapter.embed_dim,
            "training_config_digest": adapter.training_config_digest,
            "identity_init": adapter.identity_init,
        },
        sort_keys=True,
    ).encode("utf-8")
    payload = np.ascontiguousarray(adapter.weights, dtype="<f8").tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Adapter:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < len(CHECKPOINT_MAGIC) + 4 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not an adapter checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if len(blob) < offset + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    offset += header_len
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {header.get('format_version')!r}"
        )
    dim = header["embed_dim"]
    expected = dim * dim * 8
    payload = blob[offset:]
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: weight payload is {len(payload)} bytes, expected {expected}"
        )
    weights = np.frombuffer(payload, dtype="<f8").reshape(dim, dim).copy()
    return Adapter(
        weights=weights,
        identity_init=header.get("identity_init", False),
        training_config_digest=header.get("training_config_digest", ""),
    )
