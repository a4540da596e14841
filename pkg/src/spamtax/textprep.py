"""Email body normalization and tokenization.

The pipeline is deliberately rigid so that every downstream artifact
(vocabulary, cluster summaries, trained models) is reproducible from the
same frozen rules: lowercase, strip everything that is not an ASCII
letter, drop single letters, drop stopwords.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .corpus import Document

_NON_ALPHA = re.compile(r"[^a-z]+")

DEFAULT_MIN_WORDS = 5


@dataclass(frozen=True)
class TokenDoc:
    """A preprocessed document: ordered lowercase alphabetic tokens."""

    id: str
    tokens: tuple[str, ...]
    token_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "token_count", len(self.tokens))


def stopwords_path() -> Path:
    """Path of the bundled English stopword list."""
    return Path(str(resources.files("spamtax").joinpath("data/stopwords_en.txt")))


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Load a stopword list: one lowercase term per line, blank lines ignored."""
    p = Path(path) if path is not None else stopwords_path()
    terms = frozenset(
        line.strip() for line in p.read_text(encoding="utf-8").splitlines() if line.strip()
    )
    if not terms:
        raise ValueError(f"stopword list {p} is empty")
    return terms


def tokenize(text: str) -> list[str]:
    """Lowercase, turn every non-ASCII-letter into a separator, split."""
    lowered = text.lower()
    return [t for t in _NON_ALPHA.split(lowered) if t]


def preprocess(doc: Document, stopwords: frozenset[str] | set[str]) -> TokenDoc:
    """Normalize one document into a TokenDoc.

    Steps, in order: Unicode lowercase, replace every character outside
    [a-z] with a space, split on whitespace, drop tokens shorter than 2
    characters, drop stopwords. Token order is preserved.
    """
    if not stopwords:
        raise ValueError("stopwords must be non-empty")
    tokens = tuple(t for t in tokenize(doc.text) if len(t) >= 2 and t not in stopwords)
    return TokenDoc(id=doc.id, tokens=tokens)


def preprocess_all(
    docs: Iterable[Document], stopwords: frozenset[str] | set[str]
) -> list[TokenDoc]:
    return [preprocess(d, stopwords) for d in docs]


def filter_min_words(docs: list[TokenDoc], min_words: int = DEFAULT_MIN_WORDS) -> list[TokenDoc]:
    """Keep documents with at least ``min_words`` tokens, order preserved."""
    if min_words < 0:
        raise ValueError("min_words must be >= 0")
    return [d for d in docs if d.token_count >= min_words]
