"""Corpus ingestion, language detection, and JSONL dataset persistence.

A dataset is a JSONL file (one document per line) plus a sidecar
``<name>.manifest.json`` recording the declared categories and per-category
counts. Serialization is canonical (fixed key order, compact separators,
LF endings) so identical inputs always produce byte-identical files.

Language detection is a rank-order character-trigram scheme over frozen
per-language profiles bundled with the package; the detector and the
profile files are versioned together.
"""

from __future__ import annotations

import html
import json
import os
import re
from collections import Counter
from dataclasses import dataclass, replace
from email import message_from_bytes
from email.message import Message
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

PROFILE_SIZE = 1000
MIN_ALPHA_CHARS = 20
DEFAULT_MIN_CONFIDENCE = 0.5

_WORD = re.compile(r"[^\W\d_]+", re.UNICODE)
_TAG = re.compile(r"<[^>]+>")
_SCRIPT_OR_STYLE = re.compile(r"<(script|style)\b.*?</\1>", re.IGNORECASE | re.DOTALL)


class DatasetFormatError(ValueError):
    """A dataset file or its manifest violates the on-disk schema."""


@dataclass(frozen=True)
class RawEmail:
    id: str
    source_path: str
    body_raw: str


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    language: str = "und"
    lang_confidence: float = 0.0
    label: str | None = None
    cluster: int | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")
        if not 0.0 <= self.lang_confidence <= 1.0:
            raise ValueError(f"lang_confidence {self.lang_confidence} outside [0, 1]")
        if self.language == "und" and self.lang_confidence != 0.0:
            raise ValueError("language 'und' requires lang_confidence == 0")
        if self.cluster is not None and self.cluster < 0:
            raise ValueError("cluster id must be non-negative")


@dataclass(frozen=True)
class DatasetManifest:
    """Declared categories with per-category counts.

    ``total`` is the number of documents in the dataset file. For a fully
    labeled dataset the counts sum to ``total``; a dataset that has not been
    labeled yet carries an empty category list.
    """

    categories: tuple[str, ...]
    counts: dict[str, int]
    total: int

    @classmethod
    def from_docs(cls, docs: Sequence[Document]) -> "DatasetManifest":
        counts = Counter(d.label for d in docs if d.label is not None)
        categories = tuple(sorted(counts))
        return cls(categories=categories, counts={c: counts[c] for c in categories}, total=len(docs))

    def percentages(self) -> dict[str, float]:
        if self.total == 0:
            return {c: 0.0 for c in self.categories}
        return {c: 100.0 * self.counts[c] / self.total for c in self.categories}

    def validate_against(self, docs: Sequence[Document]) -> None:
        if self.total != len(docs):
            raise DatasetFormatError(
                f"manifest total {self.total} but dataset has {len(docs)} documents"
            )
        seen = Counter(d.label for d in docs if d.label is not None)
        for label in seen:
            if label not in self.categories:
                raise DatasetFormatError(f"label {label!r} not among manifest categories")
        for cat in self.categories:
            declared = self.counts.get(cat, 0)
            if declared != seen.get(cat, 0):
                raise DatasetFormatError(
                    f"manifest counts {cat!r}={declared} but dataset has {seen.get(cat, 0)}"
                )


@dataclass(frozen=True)
class IngestError:
    source: str
    message: str


@dataclass(frozen=True)
class IngestResult:
    emails: list[RawEmail]
    errors: list[IngestError]


def _decode_lossy(data: bytes) -> str:
    return data.decode("utf-8", errors="replace")


def _strip_html(markup: str) -> str:
    text = _SCRIPT_OR_STYLE.sub(" ", markup)
    text = _TAG.sub(" ", text)
    return html.unescape(text)


def _body_from_mime(msg: Message) -> str:
    plain, htm = None, None
    for part in msg.walk():
        ctype = part.get_content_type()
        if ctype not in ("text/plain", "text/html"):
            continue
        payload = part.get_payload(decode=True)
        if payload is None:
            continue
        decoded = _decode_lossy(payload)
        if ctype == "text/plain" and plain is None:
            plain = decoded
        elif ctype == "text/html" and htm is None:
            htm = decoded
    if plain is not None:
        return plain
    if htm is not None:
        return _strip_html(htm)
    return ""


def _expand_paths(paths: Sequence[str | Path]) -> list[Path]:
    out: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.is_file()))
        else:
            out.append(p)
    return out


def _ingest_jsonl(path: Path) -> IngestResult:
    emails: list[RawEmail] = []
    errors: list[IngestError] = []
    seen: set[str] = set()
    raw = _decode_lossy(path.read_bytes())
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(IngestError(where, f"invalid JSON: {exc}"))
            continue
        doc_id = str(rec.get("id", "")).strip()
        if not doc_id:
            errors.append(IngestError(where, "missing or empty 'id' field"))
            continue
        if doc_id in seen:
            errors.append(IngestError(where, f"duplicate id {doc_id!r}"))
            continue
        body = rec.get("text", rec.get("body"))
        if body is None:
            errors.append(IngestError(where, "missing 'text'/'body' field"))
            continue
        seen.add(doc_id)
        emails.append(RawEmail(id=doc_id, source_path=str(path), body_raw=str(body)))
    return IngestResult(emails, errors)


def ingest(paths: Sequence[str | Path], mime: bool = False) -> IngestResult:
    """Read raw emails from files (one email per file) or a single JSONL file.

    Ids come from file stems (or the JSONL ``id`` field), in input order.
    Unreadable files and duplicate ids are collected into the error report
    and skipped; a run yielding zero emails is fatal.
    """
    files = _expand_paths(paths)
    if len(files) == 1 and files[0].suffix.lower() == ".jsonl":
        result = _ingest_jsonl(files[0])
    else:
        emails: list[RawEmail] = []
        errors: list[IngestError] = []
        seen: set[str] = set()
        for f in files:
            try:
                data = f.read_bytes()
            except OSError as exc:
                errors.append(IngestError(str(f), f"unreadable: {exc}"))
                continue
            doc_id = f.stem
            if doc_id in seen:
                errors.append(IngestError(str(f), f"duplicate id {doc_id!r}"))
                continue
            seen.add(doc_id)
            if mime:
                body = _body_from_mime(message_from_bytes(data))
            else:
                body = _decode_lossy(data)
            emails.append(RawEmail(id=doc_id, source_path=str(f), body_raw=body))
        result = IngestResult(emails, errors)
    if not result.emails:
        raise ValueError("no readable inputs: ingestion produced zero emails")
    return result


# ---------------------------------------------------------------------------
# Language detection: rank-order distance over character trigram profiles.


def word_trigrams(text: str) -> Counter:
    """Character trigrams of every alphabetic word, padded with '_'."""
    grams: Counter = Counter()
    for word in _WORD.findall(text.lower()):
        padded = f"_{word}_"
        for i in range(len(padded) - 2):
            grams[padded[i : i + 3]] += 1
    return grams


def rank_profile(text: str, size: int = PROFILE_SIZE) -> list[str]:
    """Most frequent trigrams first; ties broken lexicographically."""
    grams = word_trigrams(text)
    ordered = sorted(grams.items(), key=lambda kv: (-kv[1], kv[0]))
    return [g for g, _ in ordered[:size]]


@lru_cache(maxsize=1)
def load_language_profiles() -> dict[str, dict[str, int]]:
    """Bundled language profiles as trigram -> rank maps."""
    base = resources.files("spamtax").joinpath("data/langprofiles")
    profiles: dict[str, dict[str, int]] = {}
    for entry in sorted(base.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".txt"):
            continue
        lang = entry.name[:-4]
        lines = entry.read_text(encoding="utf-8").splitlines()
        profiles[lang] = {g: rank for rank, g in enumerate(lines) if g}
    if not profiles:
        raise RuntimeError("no bundled language profiles found")
    return profiles


def rank_distance(text_profile: Sequence[str], lang_ranks: dict[str, int],
                  penalty: int = PROFILE_SIZE) -> int:
    """Sum of rank displacements; out-of-profile trigrams cost ``penalty``."""
    dist = 0
    for rank, gram in enumerate(text_profile):
        lang_rank = lang_ranks.get(gram)
        dist += penalty if lang_rank is None else abs(rank - lang_rank)
    return dist


def detect_language(text: str) -> tuple[str, float]:
    """Detect the language of ``text`` among the bundled profiles.

    Returns ``(language, confidence)`` with confidence = 1 - d/d_max where
    d is the rank-order distance to the winning profile and d_max the
    all-miss distance. Texts with fewer than 20 alphabetic characters, and
    texts sharing no trigram with any profile, return ('und', 0.0).
    """
    words = _WORD.findall(text.lower())
    if sum(len(w) for w in words) < MIN_ALPHA_CHARS:
        return ("und", 0.0)
    profile = rank_profile(text)
    if not profile:
        return ("und", 0.0)
    max_distance = len(profile) * PROFILE_SIZE
    best_lang, best_dist = None, None
    for lang, ranks in sorted(load_language_profiles().items()):
        d = rank_distance(profile, ranks)
        if best_dist is None or d < best_dist:
            best_lang, best_dist = lang, d
    confidence = 1.0 - best_dist / max_distance
    if confidence <= 0.0:
        return ("und", 0.0)
    return (best_lang, confidence)


def detect_all(emails: Iterable[RawEmail]) -> list[Document]:
    docs = []
    for e in emails:
        lang, conf = detect_language(e.body_raw)
        docs.append(Document(id=e.id, text=e.body_raw, language=lang, lang_confidence=conf))
    return docs


def filter_english(docs: Sequence[Document], min_confidence: float = DEFAULT_MIN_CONFIDENCE) -> list[Document]:
    """Keep documents detected as English at or above ``min_confidence``."""
    if not 0.0 <= min_confidence <= 1.0:
        raise ValueError("min_confidence must be in [0, 1]")
    return [d for d in docs if d.language == "en" and d.lang_confidence >= min_confidence]


# ---------------------------------------------------------------------------
# Persistence.


def _doc_to_record(doc: Document) -> dict:
    return {
        "id": doc.id,
        "text": doc.text,
        "lang": doc.language,
        "lang_conf": doc.lang_confidence,
        "label": doc.label,
        "cluster": doc.cluster,
    }


def _doc_from_record(rec: dict, where: str) -> Document:
    try:
        return Document(
            id=rec["id"],
            text=rec["text"],
            language=rec["lang"],
            lang_confidence=rec["lang_conf"],
            label=rec.get("label"),
            cluster=rec.get("cluster"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{where}: invalid document record: {exc}") from exc


def manifest_path(dataset_path: str | Path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".manifest.json")


def save_dataset(docs: Sequence[Document], manifest: DatasetManifest, path: str | Path) -> None:
    """Write the JSONL dataset and its manifest sidecar atomically."""
    manifest.validate_against(docs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = "".join(
        json.dumps(_doc_to_record(d), ensure_ascii=False, separators=(",", ":")) + "\n"
        for d in docs
    )
    _atomic_write(path, lines)
    mdata = {
        "categories": list(manifest.categories),
        "counts": {c: manifest.counts[c] for c in manifest.categories},
        "total": manifest.total,
    }
    _atomic_write(manifest_path(path), json.dumps(mdata, ensure_ascii=False, indent=2) + "\n")


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def load_dataset(path: str | Path) -> tuple[list[Document], DatasetManifest]:
    """Load a JSONL dataset plus manifest, validating both."""
    path = Path(path)
    docs: list[Document] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
            docs.append(_doc_from_record(rec, f"line {lineno}"))
    mpath = manifest_path(path)
    try:
        mdata = json.loads(mpath.read_text(encoding="utf-8"))
        manifest = DatasetManifest(
            categories=tuple(mdata["categories"]),
            counts={str(k): int(v) for k, v in mdata["counts"].items()},
            total=int(mdata["total"]),
        )
    except FileNotFoundError:
        raise DatasetFormatError(f"missing manifest sidecar {mpath}")
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"invalid manifest {mpath}: {exc}") from exc
    manifest.validate_against(docs)
    return docs, manifest


def relabel(doc: Document, label: str | None = None, cluster: int | None = None) -> Document:
    """Copy ``doc`` with a new label and/or cluster assignment."""
    changes = {}
    if label is not None:
        changes["label"] = label
    if cluster is not None:
        changes["cluster"] = cluster
    return replace(doc, **changes)
