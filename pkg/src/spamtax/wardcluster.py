"""Agglomerative clustering with Ward's minimum-variance linkage.

The merge loop repeatedly joins the pair of clusters with minimal
dissimilarity, starting from squared Euclidean distances and updating
through the Lance-Williams recurrence for Ward's criterion. Reported
heights are square roots of the merge dissimilarities. Ties on the
minimal dissimilarity are broken by the smallest (left, right) node id
pair, so dendrograms are reproducible even on corpora full of duplicate
emails.

Node ids follow the usual convention: leaves are 0..n-1, internal nodes
n..2n-2 in merge order.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import DatasetManifest, Document, relabel
from .vectorspace import CorpusMatrix, Vocabulary


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    merges: tuple[Merge, ...]

    def validate(self) -> None:
        n = self.n_leaves
        if len(self.merges) != n - 1:
            raise ValueError(f"expected {n - 1} merges, got {len(self.merges)}")
        seen_children: set[int] = set()
        prev = -np.inf
        sizes = {i: 1 for i in range(n)}
        for t, m in enumerate(self.merges):
            if m.height < prev - 1e-12:
                raise ValueError(f"merge {t}: height {m.height} decreases below {prev}")
            prev = max(prev, m.height)
            for child in (m.left, m.right):
                if child in seen_children:
                    raise ValueError(f"node {child} appears as a child twice")
                if child not in sizes:
                    raise ValueError(f"merge {t} references unknown node {child}")
                seen_children.add(child)
            sizes[n + t] = sizes[m.left] + sizes[m.right]
            if m.size != sizes[n + t]:
                raise ValueError(f"merge {t}: recorded size {m.size} != {sizes[n + t]}")
        if self.merges and self.merges[-1].size != n:
            raise ValueError("final merge does not cover all leaves")


@dataclass(frozen=True)
class ClusterCut:
    assignment: dict[str, int]
    k: int

    def members(self) -> dict[int, list[str]]:
        out: defaultdict[int, list[str]] = defaultdict(list)
        for doc_id, cid in self.assignment.items():
            out[cid].append(doc_id)
        return dict(out)


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    size: int
    top_terms: list[tuple[str, float]]
    sample_doc_ids: list[str]


def pairwise_sq_euclidean(matrix: CorpusMatrix) -> np.ndarray:
    """Dense n x n squared Euclidean distances between sparse rows."""
    X = matrix.to_csr()
    gram = (X @ X.T).toarray()
    sq = gram.diagonal().copy()
    d = sq[:, None] + sq[None, :] - 2.0 * gram
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def ward_cluster(matrix: CorpusMatrix) -> Dendrogram:
    """Build the full Ward dendrogram over the rows of ``matrix``.

    Nearest-neighbor candidates are cached per cluster and revalidated
    lazily after each merge, which keeps the loop close to O(n^2) on the
    dense dissimilarity store.
    """
    n = len(matrix)
    if n < 2:
        raise ValueError("ward_cluster requires at least 2 rows")
    D = pairwise_sq_euclidean(matrix)
    np.fill_diagonal(D, np.inf)

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    node_of = np.arange(n, dtype=np.int64)
    # cached row minimum and its column; exact at all times
    nbr = D.argmin(axis=1)
    mind = D[np.arange(n), nbr]

    merges: list[Merge] = []
    for step in range(n - 1):
        act_idx = np.flatnonzero(active)
        m = mind[act_idx].min()
        # candidate rows at the global minimum; resolve ties on node id pairs
        cand = act_idx[mind[act_idx] == m]
        best_pair = None  # ((min_id, max_id), slot_a, slot_b)
        for i in cand:
            js = np.flatnonzero(D[i] == m)
            for j in js:
                ids = (min(node_of[i], node_of[j]), max(node_of[i], node_of[j]))
                if best_pair is None or ids < best_pair[0]:
                    best_pair = (ids, min(i, j), max(i, j))
        (left_id, right_id), a, b = best_pair

        na, nb = int(sizes[a]), int(sizes[b])
        merges.append(Merge(left=int(left_id), right=int(right_id),
                            height=float(np.sqrt(m)), size=na + nb))

        # Lance-Williams update of row a (the merged cluster)
        others = act_idx[(act_idx != a) & (act_idx != b)]
        if len(others):
            nk = sizes[others].astype(np.float64)
            new_row = ((na + nk) * D[a, others] + (nb + nk) * D[b, others] - nk * m) / (
                na + nb + nk
            )
            D[a, others] = new_row
            D[others, a] = new_row
        active[b] = False
        D[b, :] = np.inf
        D[:, b] = np.inf
        D[a, b] = np.inf
        sizes[a] = na + nb
        node_of[a] = n + step

        if len(others) == 0:
            break
        mind[a] = D[a].min()
        nbr[a] = int(D[a].argmin())
        # revalidate cached neighbors touched by the merge
        stale = others[(nbr[others] == a) | (nbr[others] == b)]
        for k in stale:
            mind[k] = D[k].min()
            nbr[k] = int(D[k].argmin())
        fresh = others[(nbr[others] != a) & (nbr[others] != b)]
        improved = fresh[D[fresh, a] < mind[fresh]]
        mind[improved] = D[improved, a]
        nbr[improved] = a

    return Dendrogram(n_leaves=n, merges=tuple(merges))


def _partition(dendrogram: Dendrogram, n_merges: int,
               doc_ids: Sequence[str] | None) -> ClusterCut:
    n = dendrogram.n_leaves
    if doc_ids is None:
        doc_ids = [str(i) for i in range(n)]
    if len(doc_ids) != n:
        raise ValueError("doc_ids length must equal n_leaves")
    parent = list(range(2 * n - 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in range(n_merges):
        m = dendrogram.merges[t]
        parent[find(m.left)] = n + t
        parent[find(m.right)] = n + t

    groups: defaultdict[int, list[int]] = defaultdict(list)
    for leaf in range(n):
        groups[find(leaf)].append(leaf)
    ordered = sorted(groups.values(), key=lambda leaves: leaves[0])
    assignment: dict[str, int] = {}
    for cid, leaves in enumerate(ordered):
        for leaf in leaves:
            assignment[doc_ids[leaf]] = cid
    return ClusterCut(assignment=assignment, k=len(ordered))


def cut(dendrogram: Dendrogram, k: int, doc_ids: Sequence[str] | None = None) -> ClusterCut:
    """Partition into k clusters by undoing the last k-1 merges."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    return _partition(dendrogram, n - k, doc_ids)


def cut_height(dendrogram: Dendrogram, h: float,
               doc_ids: Sequence[str] | None = None) -> ClusterCut:
    """Partition by keeping merges with height <= h."""
    if h < 0:
        raise ValueError("cut height must be non-negative")
    kept = sum(1 for m in dendrogram.merges if m.height <= h)
    return _partition(dendrogram, kept, doc_ids)


def summarize(cluster_cut: ClusterCut, matrix: CorpusMatrix, vocab: Vocabulary,
              top_n: int = 10, n_samples: int = 5) -> list[ClusterSummary]:
    """Per-cluster top terms by mean TF-IDF value, ties lexicographic."""
    by_row: defaultdict[int, list[int]] = defaultdict(list)
    for row, doc_id in enumerate(matrix.doc_ids):
        if doc_id not in cluster_cut.assignment:
            raise ValueError(f"cut does not cover document {doc_id!r}")
        by_row[cluster_cut.assignment[doc_id]].append(row)

    summaries = []
    for cid in sorted(by_row):
        rows = by_row[cid]
        mean = np.zeros(len(vocab))
        for r in rows:
            vec = matrix.rows[r]
            mean[vec.indices] += vec.values
        mean /= len(rows)
        nonzero = np.flatnonzero(mean > 0)
        ranked = sorted(nonzero, key=lambda t: (-mean[t], vocab.terms[t]))[:top_n]
        top_terms = [(vocab.terms[t], float(mean[t])) for t in ranked]
        samples = sorted(matrix.doc_ids[r] for r in rows)[:n_samples]
        summaries.append(ClusterSummary(cluster_id=cid, size=len(rows),
                                        top_terms=top_terms, sample_doc_ids=samples))
    return summaries


def apply_labels(docs: Sequence[Document], cluster_cut: ClusterCut,
                 label_map: Mapping[int, str]) -> tuple[list[Document], DatasetManifest]:
    """Label every document per its cluster's category (many-to-one merges).

    Every non-empty cluster must be mapped; the manifest is recomputed from
    the labeled documents.
    """
    present = sorted(set(cluster_cut.assignment.values()))
    unmapped = [cid for cid in present if cid not in label_map]
    if unmapped:
        raise ValueError(f"unmapped cluster ids: {unmapped}")
    labeled = []
    for doc in docs:
        cid = cluster_cut.assignment.get(doc.id)
        if cid is None:
            raise ValueError(f"cut does not cover document {doc.id!r}")
        labeled.append(relabel(doc, label=label_map[cid], cluster=cid))
    return labeled, DatasetManifest.from_docs(labeled)


def save_dendrogram(dendrogram: Dendrogram, path: str | Path) -> None:
    payload = {
        "n_leaves": dendrogram.n_leaves,
        "merges": [[m.left, m.right, m.height, m.size] for m in dendrogram.merges],
    }
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")


def load_dendrogram(path: str | Path) -> Dendrogram:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    merges = tuple(
        Merge(left=int(l), right=int(r), height=float(h), size=int(s))
        for l, r, h, s in payload["merges"]
    )
    dendrogram = Dendrogram(n_leaves=int(payload["n_leaves"]), merges=merges)
    dendrogram.validate()
    return dendrogram
