"""HTTP service backing the cluster review UI.

Serves the dendrogram, per-cluster summaries and document excerpts, and
accepts label / cut / export mutations. All state lives in one session
JSON file that is rewritten atomically before a mutation is acknowledged;
the audit log is append-only and replaying it against an empty label map
reproduces the current labels. The dendrogram itself is immutable: a new
k only re-derives the cut.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .corpus import load_dataset, save_dataset
from .textprep import load_stopwords, preprocess_all
from .vectorspace import Vocabulary, encode_corpus
from .wardcluster import Dendrogram, apply_labels, cut, load_dendrogram, summarize

DEFAULT_ADDR = "127.0.0.1:8787"
ADDR_ENV_VAR = "SPAMTAX_ADDR"
EXCERPT_CHARS = 2000
SESSION_VERSION = 1


@dataclass
class ReviewSession:
    dataset: str
    dendrogram: str
    vocab: str
    export_path: str
    k: int
    label_map: dict[int, str] = field(default_factory=dict)
    audit_log: list[dict] = field(default_factory=list)
    stopwords: str | None = None

    def to_payload(self) -> dict:
        return {
            "version": SESSION_VERSION,
            "dataset": self.dataset,
            "dendrogram": self.dendrogram,
            "vocab": self.vocab,
            "export_path": self.export_path,
            "k": self.k,
            "label_map": {str(cid): lbl for cid, lbl in sorted(self.label_map.items())},
            "audit_log": self.audit_log,
            "stopwords": self.stopwords,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ReviewSession":
        if payload.get("version") != SESSION_VERSION:
            raise ValueError(f"unsupported session version {payload.get('version')!r}")
        return cls(
            dataset=payload["dataset"],
            dendrogram=payload["dendrogram"],
            vocab=payload["vocab"],
            export_path=payload["export_path"],
            k=int(payload["k"]),
            label_map={int(cid): lbl for cid, lbl in payload["label_map"].items()},
            audit_log=list(payload["audit_log"]),
            stopwords=payload.get("stopwords"),
        )


def save_session(session: ReviewSession, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(session.to_payload(), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_session(path: str | Path) -> ReviewSession:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return ReviewSession.from_payload(payload)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise RuntimeError(f"corrupt or unreadable session file {path}: {exc}") from exc


def create_session(dataset: str | Path, dendrogram: str | Path, vocab: str | Path,
                   export_path: str | Path, k: int, session_path: str | Path,
                   stopwords: str | None = None) -> ReviewSession:
    session = ReviewSession(
        dataset=str(dataset),
        dendrogram=str(dendrogram),
        vocab=str(vocab),
        export_path=str(export_path),
        k=k,
        stopwords=stopwords,
    )
    save_session(session, session_path)
    return session


def replay_audit(audit_log: list[dict]) -> dict[int, str]:
    """Rebuild the label map by replaying the audit log from scratch."""
    label_map: dict[int, str] = {}
    for entry in audit_log:
        action = entry["action"]
        if action == "label":
            label_map[int(entry["cluster"])] = entry["label"]
        elif action == "cut":
            keep = set(range(int(entry["k"])))
            label_map = {cid: lbl for cid, lbl in label_map.items() if cid in keep}
        elif action == "export":
            pass
        else:
            raise ValueError(f"unknown audit action {action!r}")
    return label_map


class ReviewState:
    """Session plus the immutable artifacts it references."""

    def __init__(self, session_path: str | Path):
        self.session_path = Path(session_path)
        self.session = load_session(self.session_path)
        try:
            self.docs, self.manifest = load_dataset(self.session.dataset)
            self.dendrogram: Dendrogram = load_dendrogram(self.session.dendrogram)
            self.vocab = Vocabulary.load(self.session.vocab)
        except Exception as exc:
            raise RuntimeError(f"session references unreadable artifacts: {exc}") from exc
        stopword_set = load_stopwords(self.session.stopwords)
        token_docs = preprocess_all(self.docs, stopword_set)
        self.matrix = encode_corpus(token_docs, self.vocab, "tfidf")
        if self.dendrogram.n_leaves != len(self.docs):
            raise RuntimeError(
                f"dendrogram has {self.dendrogram.n_leaves} leaves but dataset has "
                f"{len(self.docs)} documents"
            )
        self.lock = threading.Lock()
        self.docs_by_id = {d.id: d for d in self.docs}

    def current_cut(self, k: int | None = None):
        return cut(self.dendrogram, k or self.session.k, self.matrix.doc_ids)

    def cluster_payload(self, k: int | None = None) -> list[dict]:
        k = k or self.session.k
        c = self.current_cut(k)
        summaries = summarize(c, self.matrix, self.vocab, top_n=10)
        at_session_k = k == self.session.k
        return [
            {
                "id": s.cluster_id,
                "size": s.size,
                "top_terms": [[t, v] for t, v in s.top_terms],
                "sample_doc_ids": s.sample_doc_ids,
                "label": self.session.label_map.get(s.cluster_id) if at_session_k else None,
            }
            for s in summaries
        ]

    def record(self, action: dict) -> None:
        """Append to the audit log and persist before acknowledging."""
        self.session.audit_log.append({"ts": time.time(), **action})
        save_session(self.session, self.session_path)


def create_app(session_path: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    state = ReviewState(session_path)
    app = FastAPI(title="spamtax review service")
    app.state.review = state

    @app.exception_handler(HTTPException)
    async def http_error(_request: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"detail": exc.detail}
        payload = {"error": detail.pop("error", "request failed"), **detail}
        return JSONResponse(status_code=exc.status_code, content=payload)

    @app.get("/api/dendrogram")
    def get_dendrogram():
        d = state.dendrogram
        return {
            "n_leaves": d.n_leaves,
            "merges": [[m.left, m.right, m.height, m.size] for m in d.merges],
        }

    @app.get("/api/clusters")
    def get_clusters(k: int | None = None):
        k = k or state.session.k
        if not 1 <= k <= state.dendrogram.n_leaves:
            raise HTTPException(400, {"error": "invalid k",
                                      "detail": f"k must be in [1, {state.dendrogram.n_leaves}]"})
        return {"k": k, "clusters": state.cluster_payload(k)}

    @app.get("/api/cluster/{cluster_id}/docs")
    def get_cluster_docs(cluster_id: int, page: int = 0, page_size: int = 10):
        if page < 0 or page_size < 1:
            raise HTTPException(400, {"error": "invalid pagination",
                                      "detail": "page >= 0 and page_size >= 1 required"})
        members = state.current_cut().members().get(cluster_id)
        if members is None:
            raise HTTPException(404, {"error": "unknown cluster",
                                      "detail": f"no cluster {cluster_id} at k={state.session.k}"})
        members = sorted(members)
        start = page * page_size
        chunk = members[start:start + page_size]
        docs = []
        for doc_id in chunk:
            text = state.docs_by_id[doc_id].text
            docs.append({
                "id": doc_id,
                "excerpt": text[:EXCERPT_CHARS],
                "truncated": len(text) > EXCERPT_CHARS,
            })
        return {
            "cluster": cluster_id,
            "page": page,
            "page_size": page_size,
            "total": len(members),
            "docs": docs,
        }

    @app.post("/api/labels")
    def post_label(body: dict):
        cluster_id = body.get("cluster")
        label = body.get("label")
        if not isinstance(cluster_id, int) or not isinstance(label, str) or not label.strip():
            raise HTTPException(400, {"error": "invalid label request",
                                      "detail": "need integer 'cluster' and non-empty 'label'"})
        with state.lock:
            if cluster_id not in range(state.session.k):
                raise HTTPException(404, {"error": "unknown cluster",
                                          "detail": f"no cluster {cluster_id} at k={state.session.k}"})
            state.session.label_map[cluster_id] = label.strip()
            state.record({"action": "label", "cluster": cluster_id, "label": label.strip()})
        return {"cluster": cluster_id, "label": label.strip()}

    @app.post("/api/cut")
    def post_cut(body: dict):
        k = body.get("k")
        if not isinstance(k, int) or not 1 <= k <= state.dendrogram.n_leaves:
            raise HTTPException(400, {"error": "invalid k",
                                      "detail": f"k must be in [1, {state.dendrogram.n_leaves}]"})
        with state.lock:
            dropped = sorted(cid for cid in state.session.label_map if cid >= k)
            state.session.k = k
            for cid in dropped:
                del state.session.label_map[cid]
            state.record({"action": "cut", "k": k, "dropped_labels": dropped})
        return {"k": k, "dropped_labels": dropped}

    @app.post("/api/export")
    def post_export():
        with state.lock:
            c = state.current_cut()
            unlabeled = sorted(set(c.assignment.values()) - set(state.session.label_map))
            if unlabeled:
                raise HTTPException(409, {"error": "unlabeled clusters",
                                          "detail": "label every cluster before exporting",
                                          "unlabeled": unlabeled})
            labeled, manifest = apply_labels(state.docs, c, state.session.label_map)
            save_dataset(labeled, manifest, state.session.export_path)
            state.record({"action": "export", "path": state.session.export_path,
                          "total": manifest.total})
        return {
            "path": state.session.export_path,
            "categories": list(manifest.categories),
            "counts": manifest.counts,
            "percentages": manifest.percentages(),
            "total": manifest.total,
        }

    @app.get("/api/session")
    def get_session():
        return {
            "dataset": state.session.dataset,
            "dendrogram": state.session.dendrogram,
            "n_docs": len(state.docs),
            "k": state.session.k,
            "label_map": {str(c): l for c, l in sorted(state.session.label_map.items())},
            "audit_log": state.session.audit_log,
            "export_path": state.session.export_path,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(session_path: str | Path, addr: str | None = None,
          ui_dir: str | Path | None = None) -> None:
    """Run the review service; fatal on a busy port or corrupt session."""
    import uvicorn

    addr = addr or os.environ.get(ADDR_ENV_VAR) or DEFAULT_ADDR
    host, _, port = addr.partition(":")
    app = create_app(session_path, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="info")
