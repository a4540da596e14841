"""The three supervised models: multinomial NB, logistic regression, linear SVM.

LR and SVM are trained one-vs-rest (one binary problem per category) with
optional balanced class weighting; NB keeps its default Laplace smoothing
and takes no class weights. LR minimizes the C-weighted logistic loss with
an unregularized intercept via L-BFGS; the SVM solves the hinge-loss dual
with an SMO-style maximal-violating-pair solver, so trained SVM models
keep their support vectors and score new emails through the kernel
expansion (numerically equal to w.x + b for the linear kernel).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .vectorspace import CorpusMatrix, SparseVector

MODEL_FORMAT_VERSION = 1

DEFAULT_C = 1000.0
DEFAULT_ALPHA = 1.0
DEFAULT_MAX_ITER = 1000
DEFAULT_TOL = 1e-4
DEFAULT_SEED = 42

_SV_EPS = 1e-12  # dual coefficients below this are not support vectors
_SMO_TAU = 1e-12


@dataclass(frozen=True)
class ClassWeights:
    weights: dict[str, float]

    def of(self, label: str) -> float:
        return self.weights[label]


@dataclass(frozen=True)
class TrainConfig:
    C: float = DEFAULT_C
    alpha: float = DEFAULT_ALPHA
    class_weight: str = "balanced"
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.class_weight not in ("balanced", "none"):
            raise ValueError("class_weight must be 'balanced' or 'none'")

    def as_dict(self) -> dict:
        return {
            "C": self.C,
            "alpha": self.alpha,
            "class_weight": self.class_weight,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "seed": self.seed,
        }


@dataclass
class NBModel:
    categories: list[str]
    log_priors: np.ndarray          # (K,)
    log_likelihood: np.ndarray      # (K, V)
    alpha: float
    vocab_hash: str
    converged: bool = True

    @property
    def kind(self) -> str:
        return "nb"

    @property
    def dim(self) -> int:
        return self.log_likelihood.shape[1]


@dataclass
class LinearModel:
    kind: str                       # "lr" or "svm"
    categories: list[str]
    weights: np.ndarray             # (K, V)
    biases: np.ndarray              # (K,)
    C: float
    vocab_hash: str
    converged: bool
    # dual form, present for SVM models only: per category the support
    # vectors and their alpha_i * y_i coefficients
    support_vectors: list[list[SparseVector]] | None = None
    dual_coef: list[np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


Model = NBModel | LinearModel


def balanced_weights(labels: Sequence[str]) -> ClassWeights:
    """Per-category weight N / (K * N_c)."""
    if not labels:
        raise ValueError("labels must be non-empty")
    counts = Counter(labels)
    n, k = len(labels), len(counts)
    return ClassWeights({c: n / (k * nc) for c, nc in counts.items()})


def _sample_weights(labels: Sequence[str], config: TrainConfig) -> np.ndarray:
    if config.class_weight == "balanced":
        cw = balanced_weights(labels)
        return np.array([cw.of(lbl) for lbl in labels])
    return np.ones(len(labels))


def _check_aligned(matrix: CorpusMatrix, labels: Sequence[str]) -> list[str]:
    if len(matrix) != len(labels):
        raise ValueError(f"{len(matrix)} rows but {len(labels)} labels")
    if len(matrix) == 0:
        raise ValueError("cannot train on an empty corpus")
    return sorted(set(labels))


def train_nb(matrix: CorpusMatrix, labels: Sequence[str], config: TrainConfig) -> NBModel:
    """Multinomial NB with Laplace smoothing over summed feature values.

    Feature values act as (possibly fractional) pseudo-counts, so both BOW
    counts and TF-IDF weights are accepted; class weights are ignored.
    """
    categories = _check_aligned(matrix, labels)
    X = matrix.to_csr()
    if X.nnz and X.data.min() < 0:
        raise ValueError("multinomial NB requires non-negative feature values")
    n, v = X.shape
    k = len(categories)
    cat_index = {c: i for i, c in enumerate(categories)}
    y = np.array([cat_index[lbl] for lbl in labels])

    log_priors = np.empty(k)
    log_likelihood = np.empty((k, v))
    for ci in range(k):
        rows = np.flatnonzero(y == ci)
        feature_sums = np.asarray(X[rows].sum(axis=0)).ravel()
        smoothed = feature_sums + config.alpha
        log_likelihood[ci] = np.log(smoothed) - np.log(smoothed.sum())
        log_priors[ci] = np.log(len(rows) / n)
    return NBModel(
        categories=categories,
        log_priors=log_priors,
        log_likelihood=log_likelihood,
        alpha=config.alpha,
        vocab_hash=matrix.vocab.content_hash(),
    )


def logreg_loss_grad(params: np.ndarray, X: sp.csr_matrix, y: np.ndarray,
                     kappa: np.ndarray, C: float) -> tuple[float, np.ndarray]:
    """Weighted logistic loss 0.5||w||^2 + C sum k_i ln(1+exp(-y_i(w.x_i+b)))
    and its gradient. ``params`` stacks (w, b); the intercept is not
    regularized. y in {-1,+1}.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    margins = -y * z
    loss = 0.5 * float(w @ w) + C * float(kappa @ np.logaddexp(0.0, margins))
    if not np.isfinite(loss):
        raise FloatingPointError(
            "non-finite logistic loss; consider scaling features or lowering C"
        )
    # sigma(-y z), computed stably on both tails
    s = np.empty_like(margins)
    pos = margins >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-margins[pos]))
    e = np.exp(margins[~pos])
    s[~pos] = e / (1.0 + e)
    coef = C * kappa * (-y) * s
    grad = np.empty_like(params)
    grad[:-1] = w + X.T @ coef
    grad[-1] = coef.sum()
    return loss, grad


def _fit_binary_lr(X: sp.csr_matrix, y: np.ndarray, kappa: np.ndarray,
                   config: TrainConfig) -> tuple[np.ndarray, float, bool]:
    n, v = X.shape
    if np.all(y > 0) or np.all(y < 0):
        return np.zeros(v), float(np.sign(y.sum())), True
    x0 = np.zeros(v + 1)
    res = minimize(
        logreg_loss_grad,
        x0,
        args=(X, y, kappa, config.C),
        method="L-BFGS-B",
        jac=True,
        options={"maxiter": config.max_iter, "gtol": config.tol, "ftol": 1e-16},
    )
    _, grad = logreg_loss_grad(res.x, X, y, kappa, config.C)
    converged = bool(np.max(np.abs(grad)) < config.tol)
    return res.x[:-1], float(res.x[-1]), converged


def train_lr(matrix: CorpusMatrix, labels: Sequence[str], config: TrainConfig) -> LinearModel:
    """One-vs-rest L2-regularized logistic regression via L-BFGS."""
    categories = _check_aligned(matrix, labels)
    X = matrix.to_csr()
    kappa = _sample_weights(labels, config)
    weights = np.zeros((len(categories), X.shape[1]))
    biases = np.zeros(len(categories))
    converged = True
    for ci, cat in enumerate(categories):
        y = np.where(np.array(labels) == cat, 1.0, -1.0)
        w, b, ok = _fit_binary_lr(X, y, kappa, config)
        weights[ci], biases[ci] = w, b
        converged &= ok
    return LinearModel(
        kind="lr",
        categories=categories,
        weights=weights,
        biases=biases,
        C=config.C,
        vocab_hash=matrix.vocab.content_hash(),
        converged=converged,
    )


def svm_primal_objective(w: np.ndarray, b: float, X: sp.csr_matrix, y: np.ndarray,
                         kappa: np.ndarray, C: float) -> float:
    """0.5||w||^2 + C sum k_i max(0, 1 - y_i(w.x_i + b))."""
    margins = 1.0 - y * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(kappa @ np.maximum(margins, 0.0))


def _smo_pair_update(alpha, G, Q, i, j, y, upper):
    """One SMO step on the violating pair (i, j), preserving sum(alpha*y)."""
    old_ai, old_aj = alpha[i], alpha[j]
    if y[i] != y[j]:
        quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
        if quad <= 0:
            quad = _SMO_TAU
        delta = (-G[i] - G[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = diff
        else:
            if alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
        if diff > upper[i] - upper[j]:
            if alpha[i] > upper[i]:
                alpha[i] = upper[i]
                alpha[j] = upper[i] - diff
        else:
            if alpha[j] > upper[j]:
                alpha[j] = upper[j]
                alpha[i] = upper[j] + diff
    else:
        quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
        if quad <= 0:
            quad = _SMO_TAU
        delta = (G[i] - G[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > upper[i]:
            if alpha[i] > upper[i]:
                alpha[i] = upper[i]
                alpha[j] = total - upper[i]
        else:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
        if total > upper[j]:
            if alpha[j] > upper[j]:
                alpha[j] = upper[j]
                alpha[i] = total - upper[j]
        else:
            if alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
    G += Q[:, i] * (alpha[i] - old_ai) + Q[:, j] * (alpha[j] - old_aj)


def _fit_binary_svm(X: sp.csr_matrix, y: np.ndarray, kappa: np.ndarray,
                    config: TrainConfig) -> tuple[np.ndarray, float, np.ndarray, bool]:
    """Solve the L1 hinge dual with box constraints 0 <= a_i <= C*k_i.

    Returns (w, b, alpha, converged). Builds the dense Gram matrix, so
    memory is O(n^2) in the number of training rows.
    """
    n, v = X.shape
    if np.all(y > 0) or np.all(y < 0):
        return np.zeros(v), float(np.sign(y.sum())), np.zeros(n), True

    K = (X @ X.T).toarray()
    Q = K * np.outer(y, y)
    upper = config.C * kappa
    alpha = np.zeros(n)
    G = -np.ones(n)

    def dual_objective() -> float:
        return 0.5 * float(alpha @ (Q @ alpha)) - float(alpha.sum())

    # converged = KKT violating-pair gap below tol AND the dual objective
    # moved less than tol (relative) over the last epoch of n pair updates
    prev_obj = 0.0
    converged = False
    for _epoch in range(config.max_iter):
        gap_closed = False
        for _ in range(n):
            neg_yG = -y * G
            up_mask = ((y > 0) & (alpha < upper - _SV_EPS)) | ((y < 0) & (alpha > _SV_EPS))
            low_mask = ((y < 0) & (alpha < upper - _SV_EPS)) | ((y > 0) & (alpha > _SV_EPS))
            if not up_mask.any() or not low_mask.any():
                gap_closed = True
                break
            up_vals = np.where(up_mask, neg_yG, -np.inf)
            low_vals = np.where(low_mask, neg_yG, np.inf)
            i = int(np.argmax(up_vals))
            j = int(np.argmin(low_vals))
            if up_vals[i] - low_vals[j] < config.tol:
                gap_closed = True
                break
            _smo_pair_update(alpha, G, Q, i, j, y, upper)
        obj = dual_objective()
        if gap_closed and abs(prev_obj - obj) < config.tol * max(1.0, abs(prev_obj)):
            converged = True
            break
        prev_obj = obj

    w = X.T @ (alpha * y)
    # intercept from the KKT conditions: average y*G over free vectors,
    # else midpoint of the feasibility interval
    free = (alpha > _SV_EPS) & (alpha < upper - _SV_EPS)
    neg_yG = -y * G
    if free.any():
        b = float(np.mean(neg_yG[free]))
    else:
        up_mask = ((y > 0) & (alpha < upper - _SV_EPS)) | ((y < 0) & (alpha > _SV_EPS))
        low_mask = ((y < 0) & (alpha < upper - _SV_EPS)) | ((y > 0) & (alpha > _SV_EPS))
        hi = neg_yG[up_mask].max() if up_mask.any() else 0.0
        lo = neg_yG[low_mask].min() if low_mask.any() else 0.0
        b = float((hi + lo) / 2.0)
    return np.asarray(w).ravel(), b, alpha, converged


def train_svm(matrix: CorpusMatrix, labels: Sequence[str], config: TrainConfig) -> LinearModel:
    """One-vs-rest linear-kernel soft-margin SVM via SMO on the dual."""
    categories = _check_aligned(matrix, labels)
    X = matrix.to_csr()
    kappa = _sample_weights(labels, config)
    k, v = len(categories), X.shape[1]
    weights = np.zeros((k, v))
    biases = np.zeros(k)
    support_vectors: list[list[SparseVector]] = []
    dual_coef: list[np.ndarray] = []
    converged = True
    for ci, cat in enumerate(categories):
        y = np.where(np.array(labels) == cat, 1.0, -1.0)
        w, b, alpha, ok = _fit_binary_svm(X, y, kappa, config)
        weights[ci], biases[ci] = w, b
        converged &= ok
        sv_rows = np.flatnonzero(alpha > _SV_EPS)
        support_vectors.append([matrix.rows[r] for r in sv_rows])
        dual_coef.append(alpha[sv_rows] * y[sv_rows])
    return LinearModel(
        kind="svm",
        categories=categories,
        weights=weights,
        biases=biases,
        C=config.C,
        vocab_hash=matrix.vocab.content_hash(),
        converged=converged,
        support_vectors=support_vectors,
        dual_coef=dual_coef,
    )


def _check_vector(model: Model, vector: SparseVector, vocab_hash: str | None) -> None:
    if vector.dim != model.dim:
        raise ValueError(f"vector dim {vector.dim} != model dim {model.dim}")
    if vocab_hash is not None and vocab_hash != model.vocab_hash:
        raise ValueError("vocabulary hash does not match the one the model was trained with")


def predict_scores(model: Model, vector: SparseVector,
                   vocab_hash: str | None = None) -> dict[str, float]:
    """Per-category decision scores for one encoded document."""
    _check_vector(model, vector, vocab_hash)
    if isinstance(model, NBModel):
        scores = model.log_priors + model.log_likelihood[:, vector.indices] @ vector.values
        return dict(zip(model.categories, scores.tolist()))
    if model.kind == "svm" and model.support_vectors is not None:
        scores = []
        for svs, coef, b in zip(model.support_vectors, model.dual_coef, model.biases):
            acc = 0.0
            for sv, c in zip(svs, coef):
                acc += c * sv.dot(vector)
            scores.append(acc + b)
        return dict(zip(model.categories, scores))
    scores = model.weights[:, vector.indices] @ vector.values + model.biases
    return dict(zip(model.categories, scores.tolist()))


def predict(model: Model, vector: SparseVector, vocab_hash: str | None = None) -> str:
    """Argmax category; ties break toward the lexicographically smallest."""
    scores = predict_scores(model, vector, vocab_hash)
    values = np.array([scores[c] for c in model.categories])
    return model.categories[int(np.argmax(values))]


# ---------------------------------------------------------------------------
# Persistence.


def _sparse_to_payload(vec: SparseVector) -> dict:
    return {"dim": vec.dim, "indices": vec.indices.tolist(), "values": vec.values.tolist()}


def _sparse_from_payload(payload: dict) -> SparseVector:
    return SparseVector(dim=payload["dim"], indices=payload["indices"],
                        values=payload["values"])


def save_model(model: Model, path: str | Path, train_config: TrainConfig | None = None) -> None:
    payload: dict = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "categories": model.categories,
        "vocab_hash": model.vocab_hash,
        "converged": model.converged,
        "train_config": train_config.as_dict() if train_config else None,
    }
    if isinstance(model, NBModel):
        payload["log_priors"] = model.log_priors.tolist()
        payload["log_likelihood"] = model.log_likelihood.tolist()
        payload["alpha"] = model.alpha
    else:
        payload["weights"] = model.weights.tolist()
        payload["biases"] = model.biases.tolist()
        payload["C"] = model.C
        if model.support_vectors is not None:
            payload["support_vectors"] = [
                [_sparse_to_payload(sv) for sv in svs] for svs in model.support_vectors
            ]
            payload["dual_coef"] = [c.tolist() for c in model.dual_coef]
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")


def load_model(path: str | Path, vocab_hash: str | None = None) -> Model:
    """Load a model file; refuses version or vocabulary-hash mismatches."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt model file {path}: {exc.msg}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ValueError(f"corrupt model file {path}: missing format_version")
    if payload["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {payload['format_version']}")
    if vocab_hash is not None and payload["vocab_hash"] != vocab_hash:
        raise ValueError("model was trained against a different vocabulary")
    try:
        if payload["kind"] == "nb":
            return NBModel(
                categories=payload["categories"],
                log_priors=np.array(payload["log_priors"]),
                log_likelihood=np.array(payload["log_likelihood"]),
                alpha=payload["alpha"],
                vocab_hash=payload["vocab_hash"],
                converged=payload["converged"],
            )
        support_vectors = None
        dual_coef = None
        if "support_vectors" in payload:
            support_vectors = [
                [_sparse_from_payload(sv) for sv in svs]
                for svs in payload["support_vectors"]
            ]
            dual_coef = [np.array(c) for c in payload["dual_coef"]]
        return LinearModel(
            kind=payload["kind"],
            categories=payload["categories"],
            weights=np.array(payload["weights"]),
            biases=np.array(payload["biases"]),
            C=payload["C"],
            vocab_hash=payload["vocab_hash"],
            converged=payload["converged"],
            support_vectors=support_vectors,
            dual_coef=dual_coef,
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"corrupt model file {path}: {exc}") from exc
