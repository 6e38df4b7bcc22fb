"""Text embeddings, cosine scoring, and exact/near duplicate detection.

The builtin embedder is a deterministic lexical model: term frequencies of
word unigrams plus character 3-grams, feature-hashed into a fixed-width
vector, IDF-weighted against the corpus it was fitted on, then
L2-normalized.  An external embedding service can be plugged in through a
small HTTP contract (list of texts in, positionally aligned vectors out).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import QuestionRecord, normalize_text

DEFAULT_DIM = 2048
DEFAULT_THRESHOLD = 0.80


class DimensionMismatchError(ValueError):
    pass


class EmbeddingServiceError(RuntimeError):
    """External embedding service failure. Retryable; carries the batch ids."""

    def __init__(self, message: str, text_ids: Sequence[str] = ()):  # noqa: D107
        super().__init__(message)
        self.text_ids = list(text_ids)
        self.retryable = True


@dataclass(frozen=True)
class EmbedderSpec:
    """Which embedder a pipeline run uses; recorded in run metadata."""

    kind: str = "builtin-lexical"
    dim: int = DEFAULT_DIM
    char_ngram: int = 3
    endpoint: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("builtin-lexical", "external-service"):
            raise ValueError(f"unknown embedder kind {self.kind!r}")
        if self.kind == "external-service" and not self.endpoint:
            raise ValueError("external-service embedder requires an endpoint")

    @property
    def identity(self) -> str:
        if self.kind == "builtin-lexical":
            return f"builtin-lexical(dim={self.dim},word1+char{self.char_ngram},idf)"
        return f"external-service({self.endpoint})"


def _token_slot(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def _tokens(text: str, char_ngram: int) -> list[str]:
    """Word unigrams plus character n-grams of the normalized text."""
    norm = normalize_text(text)
    if not norm:
        return []
    toks = ["w:" + w for w in norm.split()]
    if len(norm) >= char_ngram:
        toks.extend("c:" + norm[i : i + char_ngram] for i in range(len(norm) - char_ngram + 1))
    else:
        toks.append("c:" + norm)
    return toks


class LexicalEmbedder:
    """Deterministic hashed TF-IDF embedder.

    ``fit`` computes per-slot document frequencies; an unfitted embedder
    uses uniform IDF weights, so single-text embedding still works.
    """

    def __init__(self, dim: int = DEFAULT_DIM, char_ngram: int = 3):
        self.dim = dim
        self.char_ngram = char_ngram
        self._idf = np.ones(dim, dtype=np.float64)
        self._n_docs = 0

    def fit(self, texts: Iterable[str]) -> "LexicalEmbedder":
        df = np.zeros(self.dim, dtype=np.float64)
        n = 0
        for text in texts:
            slots = {_token_slot(t, self.dim) for t in _tokens(text, self.char_ngram)}
            for s in slots:
                df[s] += 1.0
            n += 1
        self._n_docs = n
        self._idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
        return self

    def embed(self, text: str) -> np.ndarray:
        """Unit-norm vector, or the zero vector for token-free text."""
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in _tokens(text, self.char_ngram):
            vec[_token_slot(tok, self.dim)] += 1.0
        vec *= self._idf
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return vec
        return vec / norm

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self.embed(text)
        return out


class ExternalEmbedder:
    """Client for an embedding service: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def fit(self, texts: Iterable[str]) -> "ExternalEmbedder":
        return self  # stateless; the service owns its model

    def embed_many(self, texts: Sequence[str], text_ids: Sequence[str] = ()) -> np.ndarray:
        import requests

        try:
            resp = requests.post(self.endpoint, json={"texts": list(texts)}, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:
            raise EmbeddingServiceError(
                f"embedding service {self.endpoint} failed: {exc}", text_ids
            ) from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EmbeddingServiceError(
                f"embedding service returned {len(vectors or [])} vectors for {len(texts)} texts",
                text_ids,
            )
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise EmbeddingServiceError("embedding service returned ragged vectors", text_ids)
        return arr

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


def make_embedder(spec: EmbedderSpec) -> LexicalEmbedder | ExternalEmbedder:
    if spec.kind == "builtin-lexical":
        return LexicalEmbedder(dim=spec.dim, char_ngram=spec.char_ngram)
    return ExternalEmbedder(spec.endpoint)


def embed(text: str, spec: EmbedderSpec | None = None) -> np.ndarray:
    """One-off embedding of a single text (corpus-free IDF for the builtin)."""
    return make_embedder(spec or EmbedderSpec()).embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


@dataclass(frozen=True)
class SimilarPair:
    """An unordered scored pair; id_a < id_b so mirrored duplicates can't exist."""

    id_a: str
    id_b: str
    score: float

    def __post_init__(self) -> None:
        if not self.id_a < self.id_b:
            raise ValueError(f"pair ids must satisfy id_a < id_b: {self.id_a!r}, {self.id_b!r}")


def exact_duplicates(records: Sequence[QuestionRecord]) -> list[list[QuestionRecord]]:
    """Groups of records sharing identical normalized instruction text."""
    groups: dict[str, list[QuestionRecord]] = {}
    for rec in records:
        groups.setdefault(normalize_text(rec.instruction), []).append(rec)
    return [g for g in groups.values() if len(g) > 1]


def near_duplicates(
    records: Sequence[QuestionRecord],
    threshold: float = DEFAULT_THRESHOLD,
    spec: EmbedderSpec | None = None,
) -> list[SimilarPair]:
    """All unordered record pairs with instruction-embedding cosine > threshold.

    Output order is canonical (by id_a, then id_b) so parallel or repeated
    runs are bit-reproducible with the builtin embedder.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if len(records) < 2:
        return []
    texts = [normalize_text(r.instruction) for r in records]
    embedder = make_embedder(spec or EmbedderSpec())
    embedder.fit(texts)
    matrix = embedder.embed_many(texts)
    scores = matrix @ matrix.T
    pairs: dict[tuple[str, str], float] = {}
    n = len(records)
    for i in range(n):
        for j in range(i + 1, n):
            score = float(min(1.0, max(-1.0, scores[i, j])))
            if score > threshold:
                id_i, id_j = records[i].id, records[j].id
                if id_i == id_j:
                    continue  # full clones; exact dedup owns these
                key = (id_i, id_j) if id_i < id_j else (id_j, id_i)
                pairs[key] = score
    return [SimilarPair(a, b, s) for (a, b), s in sorted(pairs.items())]


@dataclass(frozen=True)
class RemovalLogEntry:
    removed_id: str
    survivor_id: str
    reason: str


@dataclass
class ResolutionResult:
    survivors: list[QuestionRecord]
    removed: list[QuestionRecord]
    log: list[RemovalLogEntry] = field(default_factory=list)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def resolve_duplicates(
    records: Sequence[QuestionRecord],
    exact_groups: Sequence[Sequence[QuestionRecord]],
    near_pairs: Sequence[SimilarPair],
) -> ResolutionResult:
    """Keep one record per duplicate component: the most verbose answer wins.

    Components are the connected pieces of the graph formed by exact groups
    and near pairs.  Verbosity is the character count of the normalized
    output; ties go to the lexicographically smallest id.
    """
    uf = _UnionFind(len(records))
    index_of: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        index_of.setdefault(rec.id, []).append(i)
    for dup_indices in index_of.values():
        for i in dup_indices[1:]:
            uf.union(dup_indices[0], i)

    exact_ids: set[str] = set()
    for group in exact_groups:
        exact_ids.update(r.id for r in group)
        anchor = index_of[group[0].id][0]
        for rec in group[1:]:
            uf.union(anchor, index_of[rec.id][0])
    for pair in near_pairs:
        uf.union(index_of[pair.id_a][0], index_of[pair.id_b][0])

    components: dict[int, list[int]] = {}
    for i in range(len(records)):
        components.setdefault(uf.find(i), []).append(i)

    survivor_idx: dict[int, int] = {}
    for root, members in components.items():
        if len(members) == 1:
            continue
        survivor_idx[root] = min(
            members,
            key=lambda i: (-len(normalize_text(records[i].output)), records[i].id, i),
        )

    survivors: list[QuestionRecord] = []
    removed: list[QuestionRecord] = []
    log: list[RemovalLogEntry] = []
    for i, rec in enumerate(records):
        root = uf.find(i)
        if root not in survivor_idx or survivor_idx[root] == i:
            survivors.append(rec)
            continue
        removed.append(rec)
        reason = "exact-duplicate" if rec.id in exact_ids else "near-duplicate"
        log.append(RemovalLogEntry(rec.id, records[survivor_idx[root]].id, reason))
    return ResolutionResult(survivors, removed, log)
