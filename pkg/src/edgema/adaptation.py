"""Lightweight classifiers and importance-weighted subset fine-tuning."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax

CHECKPOINT_VERSION = 1


class FineTuneError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class FineTuneConfig:
    fraction: float = 0.2
    iterations: int = 8
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


class LinearSoftmaxBase:
    """Shared plumbing: fixed input standardization + flat parameter vector."""

    kind = "base"

    def __init__(self, n_features: int, n_classes: int, params=None, mean=None, scale=None):
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.mean = np.zeros(n_features) if mean is None else np.asarray(mean, dtype=float)
        self.scale = np.ones(n_features) if scale is None else np.asarray(scale, dtype=float)
        p = np.zeros(self.n_params) if params is None else np.array(params, dtype=float)
        if p.shape != (self.n_params,):
            raise ValueError(f"{self.kind} expects {self.n_params} params, got {p.shape}")
        p.setflags(write=False)
        self.params = p

    @property
    def n_params(self) -> int:
        raise NotImplementedError

    def with_params(self, params) -> "LinearSoftmaxBase":
        return type(self)(self.n_features, self.n_classes, params, self.mean, self.scale, **self._extra())

    def _extra(self) -> dict:
        return {}

    def _inputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_scores(X), axis=1)

    def per_sample_loss(self, X, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        return -log_softmax(self.predict_scores(X), axis=1)[np.arange(len(y)), y]

    def weighted_loss(self, X, y, weights) -> float:
        """Mean over samples of ``weights[y_i] * cross_entropy_i``."""
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ValueError("empty dataset")
        w = np.asarray(weights, dtype=float)[y]
        return float(np.mean(w * self.per_sample_loss(X, y)))

    def gradient(self, X, y, weights, indices=None) -> np.ndarray:
        """Gradient of weighted_loss; restricted to ``indices`` when given."""
        g = self._full_gradient(X, np.asarray(y, dtype=np.int64), np.asarray(weights, dtype=float))
        return g if indices is None else g[np.asarray(indices)]

    def _score_grad(self, scores, y, weights) -> np.ndarray:
        # d loss / d scores for mean weighted cross-entropy
        prob = softmax(scores, axis=1)
        prob[np.arange(len(y)), y] -= 1.0
        return prob * (weights[y] / len(y))[:, None]

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "dims": {"features": self.n_features, "classes": self.n_classes, **self._extra()},
            "mean": [float(v) for v in self.mean],
            "scale": [float(v) for v in self.scale],
            "params": [float(v) for v in self.params],
        }

    def compatible_with(self, other) -> bool:
        return (
            getattr(other, "n_features", None) == self.n_features
            and getattr(other, "n_classes", None) == self.n_classes
        )


class SoftmaxModel(LinearSoftmaxBase):
    """Multinomial logistic regression: scores = W x + b."""

    kind = "softmax"

    @property
    def n_params(self) -> int:
        return self.n_classes * self.n_features + self.n_classes

    def _unpack(self):
        k, f = self.n_classes, self.n_features
        return self.params[: k * f].reshape(k, f), self.params[k * f :]

    def predict_scores(self, X) -> np.ndarray:
        W, b = self._unpack()
        return self._inputs(X) @ W.T + b

    def _full_gradient(self, X, y, weights) -> np.ndarray:
        Z = self._inputs(X)
        W, b = self._unpack()
        G = self._score_grad(Z @ W.T + b, y, weights)
        return np.concatenate([(G.T @ Z).ravel(), G.sum(axis=0)])


class MlpModel(LinearSoftmaxBase):
    """One tanh hidden layer; non-convex counterpart to SoftmaxModel."""

    kind = "mlp"

    def __init__(self, n_features, n_classes, params=None, mean=None, scale=None, hidden: int = 32):
        self.hidden = int(hidden)
        super().__init__(n_features, n_classes, params, mean, scale)

    def _extra(self) -> dict:
        return {"hidden": self.hidden}

    @property
    def n_params(self) -> int:
        h, f, k = self.hidden, self.n_features, self.n_classes
        return h * f + h + k * h + k

    def _unpack(self):
        h, f, k = self.hidden, self.n_features, self.n_classes
        p = self.params
        a = h * f
        W1 = p[:a].reshape(h, f)
        b1 = p[a : a + h]
        W2 = p[a + h : a + h + k * h].reshape(k, h)
        b2 = p[a + h + k * h :]
        return W1, b1, W2, b2

    def predict_scores(self, X) -> np.ndarray:
        W1, b1, W2, b2 = self._unpack()
        return np.tanh(self._inputs(X) @ W1.T + b1) @ W2.T + b2

    def _full_gradient(self, X, y, weights) -> np.ndarray:
        Z = self._inputs(X)
        W1, b1, W2, b2 = self._unpack()
        H = np.tanh(Z @ W1.T + b1)
        G = self._score_grad(H @ W2.T + b2, y, weights)
        dH = (G @ W2) * (1.0 - H**2)
        return np.concatenate([(dH.T @ Z).ravel(), dH.sum(0), (G.T @ H).ravel(), G.sum(0)])


MODEL_KINDS = {"softmax": SoftmaxModel, "mlp": MlpModel}


def model_from_dict(doc: dict):
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    cls = MODEL_KINDS.get(doc.get("kind"))
    if cls is None:
        raise ValueError(f"unknown model kind {doc.get('kind')!r}")
    dims = dict(doc["dims"])
    f, k = dims.pop("features"), dims.pop("classes")
    return cls(f, k, doc["params"], doc["mean"], doc["scale"], **dims)


def save_checkpoint(path, model) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_checkpoint(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def train_model(
    X,
    y,
    n_classes: int | None = None,
    kind: str = "softmax",
    l2: float = 1e-3,
    max_iter: int = 500,
    seed: int = 0,
    **kwargs,
):
    """Fit a fresh model (L-BFGS on cross-entropy + L2) with standardized inputs."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty training set")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    model = MODEL_KINDS[kind](X.shape[1], k, None, mean, scale, **kwargs)
    rng = np.random.default_rng(seed)
    p0 = rng.normal(0.0, 0.01, model.n_params) if kind != "softmax" else np.zeros(model.n_params)
    ones = np.ones(k)

    def objective(p):
        m = model.with_params(p)
        return (
            m.weighted_loss(X, y, ones) + 0.5 * l2 * float(p @ p),
            m.gradient(X, y, ones) + l2 * p,
        )

    res = minimize(objective, p0, jac=True, method="L-BFGS-B", options={"maxiter": max_iter})
    return model.with_params(res.x)


def select_parameter_subset(n_params: int, fraction: float, seed) -> np.ndarray:
    """``ceil(fraction * n_params)`` distinct indices, uniformly without replacement."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    # the epsilon guards against 0.2 * 100 = 20.000000000000004
    size = min(n_params, math.ceil(fraction * n_params - 1e-9))
    rng = np.random.default_rng(seed)
    return rng.choice(n_params, size=size, replace=False)


def fine_tune(model, X, y, weights, cfg: FineTuneConfig = FineTuneConfig(), subset: Sequence[int] | None = None):
    """Gradient descent on the weighted loss over a random parameter subset.

    The subset is drawn once per call from ``cfg.seed`` unless given. Every
    parameter outside it is left bit-identical; the input model is untouched.
    """
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty dataset")
    idx = select_parameter_subset(model.n_params, cfg.fraction, cfg.seed) if subset is None else np.asarray(subset)
    params = model.params.copy()
    current = model
    # divergence is detected explicitly below, so numpy's overflow warnings are noise here
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(cfg.iterations):
            g = current.gradient(X, y, weights, idx)
            if not np.all(np.isfinite(g)):
                raise FineTuneError(f"non-finite gradient at iteration {it}", it)
            params[idx] = params[idx] - cfg.learning_rate * g
            current = model.with_params(params)
            if not math.isfinite(current.weighted_loss(X, y, weights)):
                raise FineTuneError(f"non-finite loss at iteration {it}", it)
    return current
