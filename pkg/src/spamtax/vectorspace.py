"""Capped vocabulary fitting and sparse BOW / TF-IDF encoding.

Vocabulary selection keeps terms with document frequency >= min_df, ranked
by document frequency (ties lexicographic), capped at max_features, with
final indices assigned in lexicographic term order. TF-IDF uses the
smoothed inverse document frequency ln((1+N)/(1+df)) + 1 and L2-normalized
rows.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .textprep import TokenDoc

DEFAULT_MAX_FEATURES = 9000
DEFAULT_MIN_DF = 3

SCHEMES = ("bow", "tfidf")


@dataclass(frozen=True)
class VectorizerConfig:
    max_features: int = DEFAULT_MAX_FEATURES
    min_df: int = DEFAULT_MIN_DF
    ngram: int = 1
    scheme: str = "tfidf"

    def __post_init__(self):
        if self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")
        if self.ngram != 1:
            raise ValueError("only 1-grams are supported")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse vector: strictly increasing indices, nonzero values."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def dot(self, other: "SparseVector") -> float:
        """Sparse-sparse dot product by index merge."""
        i = j = 0
        a_idx, a_val = self.indices, self.values
        b_idx, b_val = other.indices, other.values
        total = 0.0
        while i < len(a_idx) and j < len(b_idx):
            ai, bj = a_idx[i], b_idx[j]
            if ai == bj:
                total += a_val[i] * b_val[j]
                i += 1
                j += 1
            elif ai < bj:
                i += 1
            else:
                j += 1
        return total

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


class Vocabulary:
    """Immutable fitted vocabulary with per-term document frequencies."""

    def __init__(self, terms: Sequence[str], doc_freq: Sequence[int], n_docs: int,
                 config: VectorizerConfig):
        self.terms = list(terms)
        self.term_to_index = {t: i for i, t in enumerate(self.terms)}
        self.doc_freq = np.asarray(doc_freq, dtype=np.int64)
        self.n_docs = n_docs
        self.config = config
        # smoothed idf, computed once; monotone non-increasing in doc_freq
        self.idf = np.log((1.0 + n_docs) / (1.0 + self.doc_freq)) + 1.0

    def __len__(self) -> int:
        return len(self.terms)

    def to_json(self) -> str:
        payload = {
            "terms": self.terms,
            "doc_freq": self.doc_freq.tolist(),
            "n_docs": self.n_docs,
            "config": {
                "max_features": self.config.max_features,
                "min_df": self.config.min_df,
                "ngram": self.config.ngram,
                "scheme": self.config.scheme,
            },
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = VectorizerConfig(**payload["config"])
        return cls(payload["terms"], payload["doc_freq"], payload["n_docs"], cfg)


@dataclass
class CorpusMatrix:
    doc_ids: list[str]
    rows: list[SparseVector]
    vocab: Vocabulary

    def __post_init__(self):
        if len(self.doc_ids) != len(self.rows):
            raise ValueError("doc_ids and rows must align")
        dim = len(self.vocab)
        for r in self.rows:
            if r.dim != dim:
                raise ValueError("row dimension does not match vocabulary size")

    def __len__(self) -> int:
        return len(self.rows)

    def to_csr(self) -> sp.csr_matrix:
        indptr = np.cumsum([0] + [r.nnz for r in self.rows])
        if len(self.rows):
            indices = np.concatenate([r.indices for r in self.rows])
            data = np.concatenate([r.values for r in self.rows])
        else:
            indices = np.empty(0, dtype=np.int64)
            data = np.empty(0)
        return sp.csr_matrix((data, indices, indptr), shape=(len(self.rows), len(self.vocab)))


def fit_vocabulary(docs: Sequence[TokenDoc], config: VectorizerConfig) -> Vocabulary:
    """Fit a vocabulary from token documents.

    Terms below min_df document frequency are dropped; the survivors are
    ranked by document frequency descending (lexicographic tie-break) and
    capped at max_features; indices are reassigned lexicographically.
    """
    if not docs:
        raise ValueError("cannot fit a vocabulary on an empty corpus")
    df: Counter = Counter()
    for doc in docs:
        df.update(set(doc.tokens))
    candidates = [t for t, c in df.items() if c >= config.min_df]
    if not candidates:
        raise ValueError(
            f"empty vocabulary: no term appears in at least {config.min_df} documents"
        )
    candidates.sort(key=lambda t: (-df[t], t))
    kept = sorted(candidates[: config.max_features])
    return Vocabulary(kept, [df[t] for t in kept], n_docs=len(docs), config=config)


def _term_counts(doc: TokenDoc, vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    counts: Counter = Counter()
    t2i = vocab.term_to_index
    for tok in doc.tokens:
        idx = t2i.get(tok)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return np.empty(0, dtype=np.int64), np.empty(0)
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return indices, values


def encode_bow(doc: TokenDoc, vocab: Vocabulary) -> SparseVector:
    """Raw in-vocabulary term counts; out-of-vocabulary tokens are ignored."""
    indices, values = _term_counts(doc, vocab)
    return SparseVector(dim=len(vocab), indices=indices, values=values)


def encode_tfidf(doc: TokenDoc, vocab: Vocabulary) -> SparseVector:
    """tf * idf with idf = ln((1+N)/(1+df)) + 1, L2-normalized."""
    if vocab.n_docs < 1:
        raise ValueError("vocabulary was fitted on an empty corpus")
    indices, values = _term_counts(doc, vocab)
    if len(indices):
        values = values * vocab.idf[indices]
        norm = math.sqrt(float(np.dot(values, values)))
        if norm > 0.0:
            values = values / norm
    return SparseVector(dim=len(vocab), indices=indices, values=values)


def encode_corpus(docs: Sequence[TokenDoc], vocab: Vocabulary, scheme: str) -> CorpusMatrix:
    """Encode documents in order under the given scheme ('bow' or 'tfidf')."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    encode = encode_bow if scheme == "bow" else encode_tfidf
    return CorpusMatrix(
        doc_ids=[d.id for d in docs],
        rows=[encode(d, vocab) for d in docs],
        vocab=vocab,
    )
