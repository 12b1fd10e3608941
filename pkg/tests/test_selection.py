import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgema.selection import (
    fit_stump,
    load_selection,
    save_selection,
    select_top_k,
    train_adaboost,
)


def exhaustive_stump_error(x, y, w, n_classes):
    """Minimum weighted error over every cut point and every (left, right) class pair."""
    best = math.inf
    cuts = sorted(set(x))
    thresholds = [cuts[0]] + [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
    for thr in thresholds:
        for lc, rc in itertools.product(range(n_classes), repeat=2):
            pred = np.where(x <= thr, lc, rc)
            best = min(best, float(np.sum(w[pred != y])))
    return best


def planted_dataset(seed, n=500, n_features=48, planted=22, n_classes=4):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, n)
    X = rng.uniform(0, 1, (n, n_features))
    X[:, planted] = y + rng.uniform(0.05, 0.95, n)
    return X, y


def test_stump_separable():
    X = np.array([[0.1], [0.2], [0.8], [0.9]])
    stump, err = fit_stump(X, [0, 0, 1, 1])
    assert err == 0.0
    assert 0.2 < stump.threshold < 0.8
    assert (stump.left_class, stump.right_class) == (0, 1)


def test_stump_alternating_labels():
    n = 10
    X = np.arange(n, dtype=float)[:, None]
    y = np.arange(n) % 2
    w = np.full(n, 1 / n)
    _, err = fit_stump(X, y, w)
    assert err == pytest.approx(exhaustive_stump_error(X[:, 0], y, w, 2))
    assert 0.5 - 1 / n - 1e-12 <= err <= 0.5


def test_stump_single_class_and_constant_feature():
    stump, err = fit_stump(np.array([[1.0], [2.0], [3.0]]), [1, 1, 1], n_classes=2)
    assert err == 0.0 and stump.left_class == stump.right_class == 1
    stump, err = fit_stump(np.array([[5.0], [5.0], [5.0]]), [0, 1, 1])
    assert stump.left_class == stump.right_class == 1
    assert err == pytest.approx(1 / 3)


@settings(max_examples=80, deadline=None)
@given(
    st.integers(2, 25).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 6), min_size=n, max_size=n),
            st.lists(st.integers(0, 2), min_size=n, max_size=n),
            st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
        )
    )
)
def test_stump_matches_exhaustive_search(data):
    x, y, w = (np.asarray(v) for v in data)
    x = x.astype(float)
    w = w / w.sum()
    stump, err = fit_stump(x[:, None], y, w, n_classes=3)
    assert err == pytest.approx(exhaustive_stump_error(x, y, w, 3), abs=1e-12)
    pred = stump.predict(x[:, None])
    assert float(np.sum(w[pred != y])) == pytest.approx(err, abs=1e-12)


def test_adaboost_recovers_planted_feature():
    X, y = planted_dataset(0)
    ens = train_adaboost(X, y, rounds=100)
    assert int(np.argmax(ens.importance)) == 22


def test_adaboost_single_round():
    X, y = planted_dataset(1)
    ens = train_adaboost(X, y, rounds=1)
    assert len(ens.rounds) == 1
    assert np.count_nonzero(ens.importance) == 1


def test_adaboost_weight_dynamics():
    X, y = planted_dataset(2, n=200)
    X[:, 22] += np.random.default_rng(9).normal(0, 0.6, 200)  # make rounds imperfect
    seen = []
    ens = train_adaboost(X, y, rounds=20, on_round=lambda *a: seen.append(a))
    assert seen[0][1] == pytest.approx(np.full(200, 1 / 200))
    for (t, w, stump, err, alpha), nxt in zip(seen, seen[1:]):
        assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-12
        w_next = nxt[1]
        miss = stump.predict(X) != y
        if 0 < err < 1 - 1 / 4 and miss.any() and (~miss).any():
            ratio = w_next / w
            assert ratio[miss].min() > ratio[~miss].max()
    assert ens.importance.sum() == pytest.approx(sum(a for _, a in ens.rounds), rel=1e-12)


def test_adaboost_importance_sums_exactly_to_alphas():
    X, y = planted_dataset(3, n=120)
    ens = train_adaboost(X, y, rounds=15)
    per = np.zeros(X.shape[1])
    for stump, alpha in ens.rounds:
        per[stump.feature_index] += alpha
    np.testing.assert_array_equal(per, ens.importance)


def test_adaboost_duplicated_samples_choose_same_stumps():
    X, y = planted_dataset(4, n=80, n_features=10, planted=3)
    X[:, 3] += np.random.default_rng(1).normal(0, 0.5, 80)
    a = train_adaboost(X, y, rounds=10)
    b = train_adaboost(np.repeat(X, 2, axis=0), np.repeat(y, 2), rounds=10)
    assert [s for s, _ in a.rounds] == [s for s, _ in b.rounds]


def test_adaboost_is_deterministic():
    X, y = planted_dataset(5, n=100)
    a = train_adaboost(X, y, rounds=10)
    b = train_adaboost(X, y, rounds=10)
    assert a.rounds == b.rounds


def test_adaboost_count_mode():
    X, y = planted_dataset(6, n=100)
    ens = train_adaboost(X, y, rounds=7, importance_mode="count")
    assert ens.importance.sum() == len(ens.rounds)


def test_adaboost_stops_when_no_better_than_chance():
    X = np.zeros((6, 2))
    y = np.array([0, 1, 0, 1, 0, 1])
    ens = train_adaboost(X, y, rounds=10)
    assert ens.rounds == []


def test_adaboost_errors():
    with pytest.raises(ValueError):
        train_adaboost(np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        train_adaboost(np.zeros((4, 3)), [1, 1, 1, 1])


def test_select_top_k_examples():
    assert select_top_k([0.5, 2.0, 1.0], 2) == [1, 2]
    assert select_top_k([1.0] * 5, 3) == [0, 1, 2]
    assert sorted(select_top_k([3, 1, 2, 5], 4)) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        select_top_k([1, 2], 0)
    with pytest.raises(ValueError):
        select_top_k([1, 2], 3)


def test_selection_json_round_trip(tmp_path):
    path = tmp_path / "subset.json"
    save_selection(path, [0.1, 0.7, 0.0], [1, 0])
    scores, selected = load_selection(path)
    assert scores.tolist() == [0.1, 0.7, 0.0] and selected == [1, 0]
    doc = json.loads(path.read_text())
    assert set(doc) >= {"version", "scores", "selected"}
