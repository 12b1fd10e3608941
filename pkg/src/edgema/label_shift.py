"""Black-box label-shift estimation and the KL retraining gate.

Confusion matrices use the joint convention ``C[i, j] = P_S(h(x) = i, y = j)``
so that ``C @ w = q`` holds with ``w[j] = P_T(y = j) / P_S(y = j)``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

KL_EPS = 1e-6
RIDGE = 1e-6
W_MAX = 10.0
SIMPLEX_TOL = 1e-9
# smallest singular value (after ridge) below which C is treated as singular
RANK_TOL = 1e-9


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


def _as_simplex(p, name="distribution") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} must lie on the probability simplex")
    return p


def estimate_predicted_distribution(predictions: Sequence[int], n_classes: int) -> np.ndarray:
    """Fraction of predictions falling in each class."""
    preds = np.asarray(predictions, dtype=np.int64)
    if preds.size == 0:
        raise ValueError("no predictions to estimate a distribution from")
    if preds.min() < 0 or preds.max() >= n_classes:
        raise ValueError(f"predictions must lie in [0, {n_classes})")
    return np.bincount(preds, minlength=n_classes) / preds.size


def label_distribution(labels: Sequence[int], n_classes: int) -> np.ndarray:
    return estimate_predicted_distribution(labels, n_classes)


def confusion_from_predictions(predicted, true, n_classes: int) -> np.ndarray:
    pred = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.size == 0 or pred.shape != true.shape:
        raise ValueError("need matching, non-empty prediction and label arrays")
    present = np.bincount(true, minlength=n_classes)[:n_classes]
    missing = [k for k in range(n_classes) if present[k] == 0]
    if missing:
        raise ValueError(f"classes {missing} absent from holdout; importance weights are unidentifiable")
    joint = np.zeros((n_classes, n_classes))
    np.add.at(joint, (pred, true), 1.0)
    return joint / pred.size


def estimate_confusion(model: Callable | object, X, y, n_classes: int) -> np.ndarray:
    """Joint confusion matrix of ``model`` on a labeled holdout set.

    ``model`` is a callable returning class indices for a feature matrix, or
    any object with a ``predict`` method doing the same.
    """
    predict = model if callable(model) else model.predict
    if len(y) == 0:
        raise ValueError("empty holdout set")
    return confusion_from_predictions(predict(np.asarray(X)), y, n_classes)


def compute_importance_weights(
    confusion, q, ridge: float = RIDGE, w_max: float = W_MAX
) -> np.ndarray:
    """Solve ``C w = q`` (ridge-regularized least squares), clip to ``[0, w_max]``."""
    C = np.asarray(confusion, dtype=float)
    q = _as_simplex(q, "q")
    if C.shape != (len(q), len(q)):
        raise ValueError(f"confusion matrix shape {C.shape} does not match q of length {len(q)}")
    gram = C.T @ C + ridge * np.eye(len(q))
    sv = np.linalg.svd(gram, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if sv[-1] < RANK_TOL:
        raise RankDeficientError(f"confusion matrix is rank deficient (condition {cond:.3g})", cond)
    w = np.linalg.solve(gram, C.T @ q)
    return np.clip(w, 0.0, w_max)


def kl_divergence(p, m, eps: float = KL_EPS) -> float:
    """D_KL(p || m) in nats after additive eps smoothing and renormalization."""
    p = np.asarray(p, dtype=float)
    m = np.asarray(m, dtype=float)
    if p.shape != m.shape or p.ndim != 1:
        raise ValueError("distributions must be vectors of equal length")
    if np.array_equal(p, m):
        return 0.0
    ps = (p + eps) / (p + eps).sum()
    ms = (m + eps) / (m + eps).sum()
    terms = np.where(p > 0, ps * np.log(ps / ms), 0.0)
    return max(0.0, float(terms.sum()))


def shift_gate(d: float, threshold: float) -> str:
    """'lag' when the divergence is below the threshold, else 'adapt'."""
    if d < 0 or math.isnan(d):
        raise ValueError(f"divergence must be >= 0, got {d}")
    if not threshold >= 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    return "lag" if d < threshold else "adapt"
