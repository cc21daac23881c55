"""Topic-specific hate-speech scoring: logistic regression over text
embeddings with cross-fitted monotone calibration.

`HateSpeechClassifier` follows the familiar estimator shape
(fit / predict / predict_proba / get_params) so it slots into standard
tooling; the module-level helpers wrap it in the pipeline's vocabulary of
labeled examples, thresholds and active-learning batches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingProvider, embed
from .errors import DegenerateTrainingError, InvalidInputError
from .models import PostRecord

LABELS = ("not_harmful", "harmful")

# Tiny raw-score admixture keeps the calibrated score strictly increasing in
# the raw score, so calibration can never reorder a ranking.
_STRICTNESS_BLEND = 1e-6


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise InvalidInputError("X must be a 2-D array of embeddings")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("X contains non-finite values")
    return X


def pava_isotonic(y: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Pool-adjacent-violators: least-squares monotone nondecreasing fit.

    Input is assumed ordered by the predictor; returns the fitted values.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    means = list(y)
    weights = list(w)
    sizes = [1] * n
    i = 0
    while i < len(means) - 1:
        if means[i] > means[i + 1]:
            total = weights[i] + weights[i + 1]
            merged = (means[i] * weights[i] + means[i + 1] * weights[i + 1]) / total
            means[i : i + 2] = [merged]
            weights[i : i + 2] = [total]
            sizes[i : i + 2] = [sizes[i] + sizes[i + 1]]
            i = max(i - 1, 0)
        else:
            i += 1
    return np.repeat(means, sizes)


@dataclass(frozen=True)
class Calibration:
    """Piecewise-linear monotone map from raw sigmoid score to probability."""

    knots_x: tuple[float, ...]
    knots_y: tuple[float, ...]

    @classmethod
    def identity(cls) -> "Calibration":
        return cls(knots_x=(0.0, 1.0), knots_y=(0.0, 1.0))

    @classmethod
    def fit(cls, raw_scores: np.ndarray, labels: np.ndarray) -> "Calibration":
        order = np.argsort(raw_scores, kind="stable")
        xs = raw_scores[order]
        fitted = pava_isotonic(labels[order].astype(float))
        # Collapse duplicate x positions to their mean fitted value.
        knots_x: list[float] = []
        knots_y: list[float] = []
        i = 0
        while i < xs.size:
            j = i
            while j < xs.size and xs[j] == xs[i]:
                j += 1
            knots_x.append(float(xs[i]))
            knots_y.append(float(fitted[i:j].mean()))
            i = j
        if len(knots_x) == 1:
            knots_x = [0.0, 1.0]
            knots_y = [knots_y[0], knots_y[0]]
        return cls(knots_x=tuple(knots_x), knots_y=tuple(knots_y))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Calibrated probability; strictly increasing in the raw score for
        scores separated by more than the blend's float resolution (~1e-10),
        so calibration never reorders an evaluation set."""
        raw = np.asarray(raw, dtype=float)
        iso = np.interp(raw, self.knots_x, self.knots_y)
        return (1.0 - _STRICTNESS_BLEND) * iso + _STRICTNESS_BLEND * raw


class HateSpeechClassifier:
    """Binary classifier: batch gradient descent on L2-regularized logistic
    loss, plus cross-fitted isotonic-style calibration for the unbalanced
    classes.

    Parameters
    ----------
    learning_rate, l2, max_iter, tol : gradient-descent settings; training
        stops when the gradient norm drops to `tol` or `max_iter` is hit.
    threshold : decision cut on the calibrated probability. None selects it
        on held-out folds: highest precision subject to recall >= min_recall.
    calibration_folds : folds for the cross-fitted calibration; calibration
        falls back to the identity map when a class is rarer than the fold
        count.
    """

    def __init__(
        self,
        learning_rate: float = 0.5,
        l2: float = 1e-4,
        max_iter: int = 2000,
        tol: float = 1e-6,
        threshold: float | None = None,
        min_recall: float = 0.5,
        calibration_folds: int = 3,
    ) -> None:
        self.learning_rate = learning_rate
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.threshold = threshold
        self.min_recall = min_recall
        self.calibration_folds = calibration_folds

    # -- estimator plumbing --------------------------------------------------

    _param_names = (
        "learning_rate",
        "l2",
        "max_iter",
        "tol",
        "threshold",
        "min_recall",
        "calibration_folds",
    )

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params) -> "HateSpeechClassifier":
        for name, value in params.items():
            if name not in self._param_names:
                raise InvalidInputError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    @property
    def is_fitted(self) -> bool:
        return hasattr(self, "weights_")

    def _require_fitted(self) -> None:
        if not self.is_fitted:
            raise InvalidInputError("classifier is not fitted")

    # -- training --------------------------------------------------------------

    def fit(self, X, y) -> "HateSpeechClassifier":
        X = _check_matrix(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.size != X.shape[0]:
            raise InvalidInputError("X and y length mismatch")
        if not set(np.unique(y)) <= {0.0, 1.0}:
            raise InvalidInputError("y must be binary 0/1")
        if len(np.unique(y)) < 2:
            raise DegenerateTrainingError("training data contains a single class")

        self.dim_ = X.shape[1]
        self.weights_, self.bias_, self.n_iter_ = self._descend(X, y)
        self.calibration_ = self._cross_fit_calibration(X, y)
        if self.threshold is not None:
            self.threshold_ = float(self.threshold)
        else:
            probs, labels = self._held_out_scores(X, y)
            self.threshold_ = select_threshold(probs, labels, self.min_recall)
        return self

    def _descend(self, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, int]:
        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        iteration = 0
        for iteration in range(1, self.max_iter + 1):
            residual = _sigmoid(X @ w + b) - y
            grad_w = X.T @ residual / n + self.l2 * w
            grad_b = float(residual.mean())
            w -= self.learning_rate * grad_w
            b -= self.learning_rate * grad_b
            gnorm = float(np.sqrt(np.dot(grad_w, grad_w) + grad_b * grad_b))
            if gnorm <= self.tol:
                break
        return w, b, iteration

    def _stratified_folds(self, y: np.ndarray) -> np.ndarray:
        """Deterministic fold ids: round-robin within each class."""
        folds = np.zeros(y.size, dtype=int)
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            folds[idx] = np.arange(idx.size) % self.calibration_folds
        return folds

    def _cross_fit_pairs(self, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        counts = [int((y == c).sum()) for c in (0.0, 1.0)]
        if min(counts) < self.calibration_folds:
            return np.array([]), np.array([])
        folds = self._stratified_folds(y)
        raw_all = np.empty(y.size)
        for k in range(self.calibration_folds):
            train = folds != k
            w, b, _ = self._descend(X[train], y[train])
            raw_all[~train] = _sigmoid(X[~train] @ w + b)
        return raw_all, y

    def _cross_fit_calibration(self, X: np.ndarray, y: np.ndarray) -> Calibration:
        raw, labels = self._cross_fit_pairs(X, y)
        if raw.size == 0:
            return Calibration.identity()
        return Calibration.fit(raw, labels)

    def _held_out_scores(self, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raw, labels = self._cross_fit_pairs(X, y)
        if raw.size == 0:
            raw, labels = _sigmoid(X @ self.weights_ + self.bias_), y
        return self.calibration_.apply(raw), labels

    # -- inference ----------------------------------------------------------------

    def decision_scores(self, X) -> np.ndarray:
        """Raw sigmoid scores before calibration."""
        self._require_fitted()
        X = _check_matrix(X)
        if X.shape[1] != self.dim_:
            raise InvalidInputError(
                f"embedding dim {X.shape[1]} does not match model dim {self.dim_}"
            )
        return _sigmoid(X @ self.weights_ + self.bias_)

    def predict_proba(self, X) -> np.ndarray:
        return self.calibration_.apply(self.decision_scores(X))

    def predict(self, X) -> np.ndarray:
        """True where the calibrated probability reaches the threshold.

        The boundary is inclusive: probability == threshold is harmful.
        """
        return self.predict_proba(X) >= self.threshold_


# -- domain-level operations ------------------------------------------------


@dataclass(frozen=True)
class LabeledExample:
    post_id: str
    embedding: tuple[float, ...]
    label: str

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise InvalidInputError(f"label must be one of {LABELS}, got {self.label!r}")


def train(
    examples: list[LabeledExample],
    provider_tag: str,
    **params,
) -> HateSpeechClassifier:
    """Fit a classifier from labeled embeddings; needs both classes present."""
    if not examples:
        raise DegenerateTrainingError("no training examples")
    dims = {len(ex.embedding) for ex in examples}
    if len(dims) != 1:
        raise InvalidInputError(f"mixed embedding dims in training data: {sorted(dims)}")
    X = np.array([ex.embedding for ex in examples], dtype=float)
    y = np.array([1.0 if ex.label == "harmful" else 0.0 for ex in examples])
    clf = HateSpeechClassifier(**params).fit(X, y)
    clf.provider_tag_ = provider_tag
    return clf


def predict(clf: HateSpeechClassifier, embedding: np.ndarray) -> tuple[float, bool]:
    """Calibrated probability and the thresholded harmful flag for one vector."""
    prob = float(clf.predict_proba(np.asarray(embedding, dtype=float).reshape(1, -1))[0])
    return prob, prob >= clf.threshold_


def select_threshold(probs: np.ndarray, labels: np.ndarray, min_recall: float = 0.5) -> float:
    """Highest-precision threshold whose recall stays at or above `min_recall`.

    Ties on precision prefer higher recall (strictly more detections at no
    precision cost), then the larger threshold. Falls back to 0.5 when no
    cut satisfies the recall floor.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    positives = labels.sum()
    if positives == 0:
        return 0.5
    best: tuple[float, float, float] | None = None  # (precision, recall, threshold)
    for threshold in sorted(set(probs.tolist())):
        predicted = probs >= threshold
        tp = float((predicted & (labels == 1.0)).sum())
        fp = float((predicted & (labels == 0.0)).sum())
        recall = tp / positives
        if tp + fp == 0 or recall < min_recall:
            continue
        candidate = (tp / (tp + fp), recall, threshold)
        if best is None or candidate >= best:
            best = candidate
    return best[2] if best is not None else 0.5


def select_active_batch(
    clf: HateSpeechClassifier,
    pool: list[PostRecord],
    batch_size: int,
    provider: EmbeddingProvider,
) -> list[tuple[PostRecord, float]]:
    """Top-scored pool posts for annotation, ties broken by post id."""
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    if not pool:
        return []
    X = np.array([embed(post.text, provider) for post in pool])
    probs = clf.predict_proba(X)
    ranked = sorted(
        zip(pool, probs.tolist()), key=lambda pair: (-pair[1], pair[0].post_id)
    )
    return ranked[:batch_size]


# -- evaluation harness --------------------------------------------------------


def confusion_counts(y_true, y_pred) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) over boolean arrays."""
    t = np.asarray(y_true, dtype=bool)
    p = np.asarray(y_pred, dtype=bool)
    tp = int(np.count_nonzero(t & p))
    fp = int(np.count_nonzero(~t & p))
    fn = int(np.count_nonzero(t & ~p))
    tn = int(np.count_nonzero(~t & ~p))
    return tp, fp, fn, tn


def evaluate(y_true, y_pred) -> dict[str, float | None]:
    """Accuracy, precision and recall; undefined ratios come back as None."""
    tp, fp, fn, tn = confusion_counts(y_true, y_pred)
    total = tp + fp + fn + tn
    return {
        "accuracy": (tp + tn) / total if total else None,
        "precision": tp / (tp + fp) if tp + fp else None,
        "recall": tp / (tp + fn) if tp + fn else None,
    }


def precision_recall_sweep(
    probs, labels
) -> list[tuple[float, float | None, float]]:
    """(threshold, precision, recall) at every distinct score cut."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    out = []
    for threshold in sorted(set(probs.tolist()), reverse=True):
        predicted = probs >= threshold
        metrics = evaluate(labels, predicted)
        out.append((threshold, metrics["precision"], metrics["recall"] or 0.0))
    return out


def interpolated_precision(
    sweep: list[tuple[float, float | None, float]]
) -> list[tuple[float, float]]:
    """Monotone precision envelope over recall: at each recall level, the
    best precision achievable at that recall or higher."""
    points = sorted(
        ((r, p) for _, p, r in sweep if p is not None), key=lambda x: x[0]
    )
    envelope: list[tuple[float, float]] = []
    best = 0.0
    for recall, precision in reversed(points):
        best = max(best, precision)
        envelope.append((recall, best))
    envelope.reverse()
    return envelope


# -- model persistence -------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def save_model(clf: HateSpeechClassifier, path: str | Path) -> None:
    clf._require_fitted()
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "dim": clf.dim_,
        "provider": getattr(clf, "provider_tag_", "unknown"),
        "weights": clf.weights_.tolist(),
        "bias": clf.bias_,
        "threshold": clf.threshold_,
        "calibration": {
            "knots_x": list(clf.calibration_.knots_x),
            "knots_y": list(clf.calibration_.knots_y),
        },
        "params": clf.get_params(),
    }
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_model(path: str | Path) -> HateSpeechClassifier:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise InvalidInputError(
            f"unsupported model format {payload.get('format_version')!r}"
        )
    clf = HateSpeechClassifier(**payload["params"])
    clf.dim_ = int(payload["dim"])
    clf.weights_ = np.asarray(payload["weights"], dtype=float)
    clf.bias_ = float(payload["bias"])
    clf.threshold_ = float(payload["threshold"])
    clf.calibration_ = Calibration(
        knots_x=tuple(payload["calibration"]["knots_x"]),
        knots_y=tuple(payload["calibration"]["knots_y"]),
    )
    clf.provider_tag_ = payload["provider"]
    clf.n_iter_ = 0
    return clf
