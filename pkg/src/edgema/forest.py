"""Random-forest domain classifier (CART, Gini, bootstrap + per-node feature sampling)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

FOREST_VERSION = 1
MAX_DEPTH = 16


@dataclass
class Leaf:
    class_counts: np.ndarray  # int per domain

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.class_counts))

    @property
    def n_samples(self) -> int:
        return int(self.class_counts.sum())


@dataclass
class Split:
    feature_index: int
    threshold: float
    left: "Node"
    right: "Node"
    n_samples: int = 0


Node = Union[Leaf, Split]


def _leaf_for(node: Node, x: np.ndarray) -> Leaf:
    while isinstance(node, Split):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node


def _gini_split(values, y, n_classes):
    """Best Gini threshold on one column; None when the column is constant."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    cut = np.nonzero(v[1:] > v[:-1])[0]
    if len(cut) == 0:
        return None
    onehot = np.zeros((len(v), n_classes))
    onehot[np.arange(len(v)), y[order]] = 1.0
    cum = np.cumsum(onehot, axis=0)
    left = cum[cut]
    right = cum[-1] - left
    nl = (cut + 1).astype(float)
    nr = len(v) - nl
    gini_l = 1.0 - np.sum(left**2, axis=1) / nl**2
    gini_r = 1.0 - np.sum(right**2, axis=1) / nr**2
    impurity = (nl * gini_l + nr * gini_r) / len(v)
    best = int(np.argmin(impurity))
    i = cut[best]
    return float(impurity[best]), float(0.5 * (v[i] + v[i + 1]))


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    features: Sequence[int],
    rng: np.random.Generator | None,
    max_features: int | None = None,
    max_depth: int = MAX_DEPTH,
) -> Node:
    """Grow one CART tree over the columns listed in ``features``.

    With ``max_features`` set, each node considers a random subset of that
    many candidate columns drawn from ``rng``; otherwise all of them.
    """
    features = list(features)

    def grow(idx: np.ndarray, depth: int) -> Node:
        counts = np.bincount(y[idx], minlength=n_classes)
        if depth >= max_depth or len(idx) < 2 or np.count_nonzero(counts) <= 1:
            return Leaf(counts)
        cand = features
        if max_features is not None and max_features < len(features):
            cand = [features[i] for i in np.sort(rng.choice(len(features), max_features, replace=False))]
        best = None
        for f in cand:
            res = _gini_split(X[idx, f], y[idx], n_classes)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], f, res[1])
        if best is None:
            return Leaf(counts)
        _, f, thr = best
        go_left = X[idx, f] <= thr
        return Split(f, thr, grow(idx[go_left], depth + 1), grow(idx[~go_left], depth + 1), len(idx))

    return grow(np.arange(len(y)), 0)


@dataclass
class RandomForest:
    trees: list[Node]
    feature_subset: list[int]
    domain_labels: list[str]
    seed: int
    n_features: int | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return len(self.domain_labels)

    def votes(self, x) -> np.ndarray:
        x = self._check(x)
        v = np.zeros(self.n_classes, dtype=np.int64)
        for tree in self.trees:
            v[_leaf_for(tree, x).prediction] += 1
        return v

    def predict(self, x) -> tuple[int, np.ndarray]:
        """Majority vote over trees; ties go to the lowest domain index."""
        v = self.votes(x)
        return int(np.argmax(v)), v

    def predict_many(self, X) -> np.ndarray:
        return np.array([self.predict(row)[0] for row in np.atleast_2d(X)], dtype=np.int64)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(getattr(x, "values", x), dtype=float)
        if x.ndim != 1:
            raise ValueError("predict expects a single feature vector")
        if self.feature_subset and max(self.feature_subset) >= len(x):
            raise ValueError(
                f"feature vector of length {len(x)} does not cover feature {max(self.feature_subset)}"
            )
        return x


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws with replacement from range(n)."""
    return rng.integers(0, n, n)


def train_forest(
    X,
    y,
    n_trees: int = 32,
    seed: int = 0,
    feature_subset: Sequence[int] | None = None,
    domain_labels: Sequence[str] | None = None,
    bootstrap: bool = True,
    max_features: int | str | None = "sqrt",
    max_depth: int = MAX_DEPTH,
) -> RandomForest:
    """Bootstrap-aggregated CART trees; tree t uses ``default_rng([seed, t])``.

    ``bootstrap=False`` and ``max_features=None`` turn the forest into
    plain CART trees (used to check against a reference implementation).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, F) with one label per row")
    if len(y) < 2:
        raise ValueError("need at least two samples")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    subset = list(range(X.shape[1])) if feature_subset is None else [int(i) for i in feature_subset]
    n_classes = int(y.max()) + 1 if domain_labels is None else len(domain_labels)
    if domain_labels is None:
        domain_labels = [str(i) for i in range(n_classes)]
    if max_features == "sqrt":
        mf = math.ceil(math.sqrt(len(subset)))
    else:
        mf = max_features
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        idx = bootstrap_indices(len(y), rng) if bootstrap else np.arange(len(y))
        trees.append(build_tree(X[idx], y[idx], n_classes, subset, rng, mf, max_depth))
    return RandomForest(trees, subset, list(domain_labels), seed, X.shape[1])


@dataclass(frozen=True)
class DomainDecision:
    domain: int
    votes: np.ndarray  # tree votes summed over the frames used
    frames_used: int
    frame_domains: tuple[int, ...] = ()

    @property
    def frame_votes(self) -> np.ndarray:
        return np.bincount(self.frame_domains, minlength=len(self.votes))


def detect_domain(forest: RandomForest, batch, m: int = 10, extract=None) -> DomainDecision:
    """Classify the last ``min(m, len(batch))`` frames; frame-level majority wins.

    ``batch`` is either a sequence of feature vectors or an object with a
    ``frames`` attribute whose items are turned into feature vectors by
    ``extract`` (default: reduced grid at 32 levels).
    """
    items = getattr(batch, "frames", batch)
    if len(items) == 0:
        raise ValueError("cannot detect the domain of an empty batch")
    if m < 1:
        raise ValueError("m must be >= 1")
    tail = list(items)[-m:]
    if hasattr(batch, "frames"):
        if extract is None:
            from .texture import DEFAULT_LEVELS, extract_features, reduced_grid

            grid = reduced_grid()
            extract = lambda img: extract_features(img, grid, DEFAULT_LEVELS).values  # noqa: E731
        tail = [extract(getattr(fr, "image", fr)) for fr in tail]
    votes = np.zeros(forest.n_classes, dtype=np.int64)
    per_frame = []
    for x in tail:
        d, v = forest.predict(x)
        votes += v
        per_frame.append(d)
    counts = np.bincount(per_frame, minlength=forest.n_classes)
    return DomainDecision(int(np.argmax(counts)), votes, len(tail), tuple(per_frame))


def evaluate_detector(forest: RandomForest, X, y) -> float:
    """Plain accuracy of per-sample forest predictions."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty test set")
    return float(np.mean(forest.predict_many(X) == y))


def train_best_forest(X, y, X_val, y_val, restarts: int = 1, seed: int = 0, **kwargs):
    """Train ``restarts`` forests with seeds seed, seed+1, ... and keep the most accurate.

    Returns ``(forest, accuracy)``; the first seed wins ties.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        f = train_forest(X, y, seed=seed + r, **kwargs)
        acc = evaluate_detector(f, X_val, y_val)
        if best is None or acc > best[1]:
            best = (f, acc)
    return best


# -- serialization ---------------------------------------------------------


def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": [int(c) for c in node.class_counts]}
    return {
        "feature": node.feature_index,
        "threshold": node.threshold,
        "n": node.n_samples,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict) -> Node:
    if "leaf" in d:
        return Leaf(np.asarray(d["leaf"], dtype=np.int64))
    return Split(
        int(d["feature"]),
        float(d["threshold"]),
        _node_from_dict(d["left"]),
        _node_from_dict(d["right"]),
        int(d.get("n", 0)),
    )


def forest_to_dict(forest: RandomForest) -> dict:
    return {
        "version": FOREST_VERSION,
        "seed": forest.seed,
        "feature_subset": forest.feature_subset,
        "domain_labels": forest.domain_labels,
        "n_features": forest.n_features,
        "trees": [_node_to_dict(t) for t in forest.trees],
    }


def forest_from_dict(doc: dict) -> RandomForest:
    if doc.get("version") != FOREST_VERSION:
        raise ValueError(f"unsupported forest version {doc.get('version')!r}")
    return RandomForest(
        trees=[_node_from_dict(t) for t in doc["trees"]],
        feature_subset=[int(i) for i in doc["feature_subset"]],
        domain_labels=[str(s) for s in doc["domain_labels"]],
        seed=int(doc["seed"]),
        n_features=doc.get("n_features"),
    )


def save_forest(path, forest: RandomForest) -> None:
    with open(path, "w") as fh:
        json.dump(forest_to_dict(forest), fh)


def load_forest(path) -> RandomForest:
    with open(path) as fh:
        return forest_from_dict(json.load(fh))
