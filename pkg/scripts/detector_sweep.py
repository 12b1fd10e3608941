"""Domain-detector accuracy as a function of selected-feature count and forest size."""

import argparse
import itertools

import numpy as np

from edgema import synth
from edgema.forest import evaluate_detector, train_forest
from edgema.selection import select_top_k, train_adaboost
from edgema.texture import feature_matrix, grid_by_name


def domain_features(n_per_domain, seed, grid):
    frames = list(synth.iter_frames(synth.detector_spec(n_per_domain, seed)))
    return feature_matrix((f.image for f in frames), grid), np.array([f.domain for f in frames])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", choices=("full", "reduced"), default="reduced")
    ap.add_argument("--train", type=int, default=500, help="training frames per domain")
    ap.add_argument("--test", type=int, default=125, help="test frames per domain")
    ap.add_argument("--features", type=int, nargs="+", default=[1, 2, 4, 6, 12, 24])
    ap.add_argument("--trees", type=int, nargs="+", default=[1, 8, 32])
    ap.add_argument("--rounds", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = grid_by_name(args.grid)
    X_train, d_train = domain_features(args.train, 2 * args.seed + 1, grid)
    X_test, d_test = domain_features(args.test, 2 * args.seed + 2, grid)
    importance = train_adaboost(X_train, d_train, rounds=args.rounds).importance
    print(f"{'features':>8} {'trees':>5} {'accuracy':>8}")
    for k, n_trees in itertools.product(args.features, args.trees):
        subset = select_top_k(importance, min(k, X_train.shape[1]))
        forest = train_forest(X_train, d_train, n_trees=n_trees, seed=args.seed, feature_subset=subset)
        print(f"{k:>8} {n_trees:>5} {evaluate_detector(forest, X_test, d_test):>8.4f}")


if __name__ == "__main__":
    main()
