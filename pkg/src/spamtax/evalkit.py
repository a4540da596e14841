"""Metrics, stratified cross-validation, and per-email latency benchmarking.

Precision/recall/F1 come from one confusion matrix pooled over all CV
folds; CV accuracy is the mean over per-fold accuracies. 0/0 metric cases
are defined as 0 and flagged in the report instead of propagating NaN.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document
from .pipeline import FittedPipeline, PipelineSpec, fit_pipeline, predict_pipeline
from .textprep import TokenDoc


@dataclass(frozen=True)
class ConfusionMatrix:
    categories: tuple[str, ...]
    counts: np.ndarray  # (K, K), rows = true, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class EvalReport:
    categories: list[str]
    per_class: dict[str, dict[str, float]]
    micro: tuple[float, float, float]
    macro: tuple[float, float, float]
    weighted: tuple[float, float, float]
    accuracy: float
    zero_division: bool
    cv_accuracy_mean: float | None = None
    cv_accuracy_std: float | None = None
    ms_per_email: float | None = None

    def to_json(self) -> str:
        payload = {
            "categories": self.categories,
            "per_class": self.per_class,
            "micro": {"precision": self.micro[0], "recall": self.micro[1], "f1": self.micro[2]},
            "macro": {"precision": self.macro[0], "recall": self.macro[1], "f1": self.macro[2]},
            "weighted": {
                "precision": self.weighted[0],
                "recall": self.weighted[1],
                "f1": self.weighted[2],
            },
            "accuracy": self.accuracy,
            "zero_division": self.zero_division,
            "cv_accuracy_mean": self.cv_accuracy_mean,
            "cv_accuracy_std": self.cv_accuracy_std,
            "ms_per_email": self.ms_per_email,
        }
        return json.dumps(payload, indent=2)


def confusion(true_labels: Sequence[str], predicted_labels: Sequence[str],
              categories: Sequence[str]) -> ConfusionMatrix:
    """Row = true category, column = predicted category."""
    if len(true_labels) != len(predicted_labels):
        raise ValueError("label lists must have equal length")
    index = {c: i for i, c in enumerate(categories)}
    counts = np.zeros((len(categories), len(categories)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index:
            raise ValueError(f"unknown true label {t!r}")
        if p not in index:
            raise ValueError(f"unknown predicted label {p!r}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(categories=tuple(categories), counts=counts)


def _safe_div(num: float, den: float) -> tuple[float, bool]:
    if den == 0.0:
        return 0.0, True
    return num / den, False


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """Per-class and micro/macro/weighted P/R/F1 plus accuracy."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = counts.diagonal()
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    support = counts.sum(axis=1)

    zero_hit = False
    per_class: dict[str, dict[str, float]] = {}
    precisions, recalls, f1s = [], [], []
    for i, cat in enumerate(cm.categories):
        p, z1 = _safe_div(tp[i], tp[i] + fp[i])
        r, z2 = _safe_div(tp[i], tp[i] + fn[i])
        f1, z3 = _safe_div(2 * p * r, p + r)
        zero_hit |= z1 or z2 or z3
        per_class[cat] = {
            "precision": p,
            "recall": r,
            "f1": f1,
            "support": int(support[i]),
        }
        precisions.append(p)
        recalls.append(r)
        f1s.append(f1)

    tp_g, fp_g, fn_g = tp.sum(), fp.sum(), fn.sum()
    micro_p, _ = _safe_div(tp_g, tp_g + fp_g)
    micro_r, _ = _safe_div(tp_g, tp_g + fn_g)
    micro_f1, _ = _safe_div(2 * micro_p * micro_r, micro_p + micro_r)

    macro = (float(np.mean(precisions)), float(np.mean(recalls)), float(np.mean(f1s)))
    wp = float(np.dot(support, precisions) / total)
    wr = float(np.dot(support, recalls) / total)
    wf = float(np.dot(support, f1s) / total)
    accuracy = float(tp_g / total)

    return EvalReport(
        categories=list(cm.categories),
        per_class=per_class,
        micro=(float(micro_p), float(micro_r), float(micro_f1)),
        macro=macro,
        weighted=(wp, wr, wf),
        accuracy=accuracy,
        zero_division=zero_hit,
    )


def stratified_kfold(labels: Sequence[str], k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic stratified folds; per-category counts differ by <= 1."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    by_cat: dict[str, list[int]] = {}
    for idx, lbl in enumerate(labels):
        by_cat.setdefault(lbl, []).append(idx)
    fold_members: list[list[int]] = [[] for _ in range(k)]
    for cat in sorted(by_cat):
        members = np.array(by_cat[cat])
        if len(members) < k:
            raise ValueError(f"category {cat!r} has {len(members)} samples, fewer than k={k}")
        rng.shuffle(members)
        for f in range(k):
            fold_members[f].extend(members[f::k].tolist())
    all_idx = np.arange(len(labels))
    folds = []
    for f in range(k):
        test = np.array(sorted(fold_members[f]))
        mask = np.ones(len(labels), dtype=bool)
        mask[test] = False
        folds.append((all_idx[mask], test))
    return folds


def cross_validate(docs: Sequence[TokenDoc], labels: Sequence[str], spec: PipelineSpec,
                   k: int = 5, seed: int = 42) -> EvalReport:
    """k-fold CV for one pipeline; vocabulary is refit on each train split."""
    if len(docs) != len(labels):
        raise ValueError("docs and labels must align")
    categories = sorted(set(labels))
    labels = list(labels)
    pooled_true: list[str] = []
    pooled_pred: list[str] = []
    fold_accuracies = []
    for fold_no, (train_idx, test_idx) in enumerate(stratified_kfold(labels, k, seed)):
        try:
            fitted = fit_pipeline([docs[i] for i in train_idx],
                                  [labels[i] for i in train_idx], spec)
            preds = predict_pipeline(fitted, [docs[i] for i in test_idx])
        except Exception as exc:
            raise RuntimeError(f"fold {fold_no}: {exc}") from exc
        truth = [labels[i] for i in test_idx]
        pooled_true.extend(truth)
        pooled_pred.extend(preds)
        fold_accuracies.append(np.mean([t == p for t, p in zip(truth, preds)]))
    report = metrics(confusion(pooled_true, pooled_pred, categories))
    report.cv_accuracy_mean = float(np.mean(fold_accuracies))
    report.cv_accuracy_std = float(np.std(fold_accuracies))
    return report


def bench(fitted: FittedPipeline, docs: Sequence[Document], stopwords,
          repetitions: int = 3) -> float:
    """Wall-clock milliseconds per email for preprocess -> encode -> predict.

    One warm-up pass runs untimed; the benchmark itself is single-threaded.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not docs:
        raise ValueError("cannot benchmark an empty corpus")
    for doc in docs:  # warm-up
        fitted.classify_text(doc, stopwords)
    start = time.perf_counter()
    for _ in range(repetitions):
        for doc in docs:
            fitted.classify_text(doc, stopwords)
    elapsed = time.perf_counter() - start
    return elapsed * 1000.0 / (len(docs) * repetitions)
