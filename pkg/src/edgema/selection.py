"""AdaBoost (SAMME-style) feature scoring with decision stumps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

ERROR_FLOOR = 1e-10
# errors within this band count as ties so that tie-breaks survive float noise
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Stump:
    feature_index: int
    threshold: float
    left_class: int
    right_class: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        col = np.asarray(X)[:, self.feature_index]
        return np.where(col <= self.threshold, self.left_class, self.right_class)


@dataclass
class AdaBoostEnsemble:
    n_features: int
    n_classes: int
    rounds: list[tuple[Stump, float]] = field(default_factory=list)
    importance_mode: str = "alpha"

    @property
    def importance(self) -> np.ndarray:
        scores = np.zeros(self.n_features)
        for stump, alpha in self.rounds:
            scores[stump.feature_index] += alpha if self.importance_mode == "alpha" else 1.0
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((len(X), self.n_classes))
        rows = np.arange(len(X))
        for stump, alpha in self.rounds:
            votes[rows, stump.predict(X)] += alpha
        return np.argmax(votes, axis=1)


def _check(X, y, w=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, F) with one label per row")
    if len(y) == 0:
        raise ValueError("empty dataset")
    if np.any(y < 0):
        raise ValueError("labels must be non-negative class indices")
    if w is None:
        w = np.full(len(y), 1.0 / len(y))
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != y.shape or np.any(w < 0):
            raise ValueError("weights must be non-negative, one per sample")
    return X, y, w


def _best_split(values, y, w, n_classes, order=None):
    """Best stump on one feature column: (error, threshold, left, right)."""
    if order is None:
        order = np.argsort(values, kind="stable")
    v = values[order]
    onehot = np.zeros((len(v), n_classes))
    onehot[np.arange(len(v)), y[order]] = w[order]
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    # split after position i is allowed where the value changes
    cut = np.nonzero(v[1:] > v[:-1])[0]
    if len(cut) == 0:
        c = int(np.argmax(total))
        return float(total.sum() - total[c]), float(v[0]), c, c
    left = cum[cut]
    right = total - left
    err = (left.sum(1) - left.max(1)) + (right.sum(1) - right.max(1))
    best = int(np.nonzero(err <= err.min() + TIE_TOL)[0][0])
    i = cut[best]
    thr = 0.5 * (v[i] + v[i + 1])
    return float(err[best]), float(thr), int(np.argmax(left[best])), int(np.argmax(right[best]))


def fit_stump(X, y, w=None, feature_index: int = 0, n_classes: int | None = None):
    """Weighted-error-minimizing stump on a single feature.

    Thresholds are midpoints between consecutive distinct values; each side
    predicts its weighted-majority class. Returns ``(stump, error)``.
    """
    X, y, w = _check(X, y, w)
    k = int(y.max()) + 1 if n_classes is None else n_classes
    err, thr, lc, rc = _best_split(X[:, feature_index], y, w, k)
    return Stump(feature_index, thr, lc, rc), err


def train_adaboost(
    X,
    y,
    rounds: int = 100,
    n_classes: int | None = None,
    importance_mode: Literal["alpha", "count"] = "alpha",
    on_round=None,
) -> AdaBoostEnsemble:
    """Score features by boosting stumps for ``rounds`` iterations.

    Each round normalizes the sample weights, picks the feature whose stump
    has the least weighted error, credits that feature with the round's
    ``alpha = ln((1-E)/E) + ln(K-1)`` and multiplies the weights of the
    misclassified samples by ``exp(alpha)``. Training stops early once the
    best error reaches ``1 - 1/K``.

    ``on_round(t, weights, stump, error, alpha)`` is called after each
    accepted round with the normalized weights used in that round.
    """
    X, y, _ = _check(X, y)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    if len(np.unique(y)) < 2:
        raise ValueError("AdaBoost needs at least two classes")
    n, n_feat = X.shape
    orders = [np.argsort(X[:, j], kind="stable") for j in range(n_feat)]
    ens = AdaBoostEnsemble(n_feat, k, importance_mode=importance_mode)
    w = np.ones(n)
    for t in range(rounds):
        w = w / w.sum()
        best = None
        for j in range(n_feat):
            err, thr, lc, rc = _best_split(X[:, j], y, w, k, orders[j])
            if best is None or err < best[0] - TIE_TOL:
                best = (err, j, thr, lc, rc)
        err, j, thr, lc, rc = best
        if err >= 1.0 - 1.0 / k:
            break
        err = max(err, ERROR_FLOOR)
        alpha = math.log((1.0 - err) / err) + math.log(k - 1)
        stump = Stump(j, thr, lc, rc)
        ens.rounds.append((stump, alpha))
        if on_round is not None:
            on_round(t, w.copy(), stump, err, alpha)
        miss = stump.predict(X) != y
        w = w * np.where(miss, math.exp(alpha), 1.0)
    return ens


def select_top_k(scores: Sequence[float], k: int) -> list[int]:
    """Indices of the k largest scores, descending; ties go to the lower index."""
    s = np.asarray(scores, dtype=float)
    if not 1 <= k <= len(s):
        raise ValueError(f"k must be in [1, {len(s)}], got {k}")
    order = sorted(range(len(s)), key=lambda i: (-s[i], i))
    return order[:k]


def save_selection(path, scores, selected, descriptors=None) -> None:
    doc = {
        "version": 1,
        "scores": [float(s) for s in scores],
        "selected": [int(i) for i in selected],
    }
    if descriptors is not None:
        doc["descriptors"] = list(descriptors)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_selection(path) -> tuple[np.ndarray, list[int]]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"{path}: unsupported selection version {doc.get('version')!r}")
    return np.asarray(doc["scores"], dtype=float), [int(i) for i in doc["selected"]]
