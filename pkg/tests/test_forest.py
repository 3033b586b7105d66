"""CART forest: split correctness, determinism, bounds."""

import json

import numpy as np
import pytest

from parkcast.models import fit_rfr, model_to_dict, predict
from parkcast.models.forest import _grow_tree, leaf_values


def exhaustive_split_scan(x, y):
    """Oracle: scan every midpoint threshold, return (best_sse, thresholds).

    `thresholds` collects every threshold achieving the minimal SSE.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    best = (np.inf, [])
    for cut in range(1, len(xs)):
        if xs[cut - 1] == xs[cut]:
            continue
        left, right = ys[:cut], ys[cut:]
        sse = float(np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2))
        thr = (xs[cut - 1] + xs[cut]) / 2.0
        if sse < best[0] - 1e-15:
            best = (sse, [thr])
        elif abs(sse - best[0]) <= 1e-15:
            best[1].append(thr)
    return best


class TestTreeGrowth:
    def test_stump_on_step_data(self):
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(0, 1, size=40))
        y = (x >= 0.5).astype(float)
        X = x.reshape(-1, 1)
        tree = _grow_tree(X, y, np.random.default_rng(1), max_depth=1, min_samples_leaf=1, max_features=1)
        assert tree.feature[0] == 0
        below = x[x < 0.5].max()
        above = x[x >= 0.5].min()
        assert below < tree.threshold[0] <= above
        _, oracle_thresholds = exhaustive_split_scan(x, y)
        assert any(abs(tree.threshold[0] - t) < 1e-12 for t in oracle_thresholds)

    def test_split_matches_oracle_on_random_data(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            x = rng.uniform(0, 1, size=30)
            y = np.where(x < rng.uniform(0.3, 0.7), rng.normal(0, 0.1, 30), rng.normal(1, 0.1, 30))
            tree = _grow_tree(
                x.reshape(-1, 1), y, np.random.default_rng(trial), max_depth=1,
                min_samples_leaf=1, max_features=1,
            )
            oracle_sse, oracle_thresholds = exhaustive_split_scan(x, y)
            assert any(abs(tree.threshold[0] - t) < 1e-12 for t in oracle_thresholds)

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        model = fit_rfr(X, y, n_trees=10, min_samples_leaf=5, seed=0)
        for tree in model.params.trees:
            leaves = tree.feature < 0
            assert np.all(tree.n_samples[leaves] >= 5)


class TestForest:
    def test_constant_target_is_exact(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 4))
        y = np.full(50, 0.37)
        model = fit_rfr(X, y, n_trees=20, seed=3)
        assert np.all(predict(model, X) == 0.37)

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 5))
        y = rng.normal(size=60)
        m1 = fit_rfr(X, y, n_trees=15, seed=42)
        m2 = fit_rfr(X, y, n_trees=15, seed=42)
        assert json.dumps(model_to_dict(m1), sort_keys=True) == json.dumps(
            model_to_dict(m2), sort_keys=True
        )
        p1, p2 = predict(m1, X), predict(m2, X)
        assert np.array_equal(p1, p2)
        assert m1.train_fingerprint == m2.train_fingerprint

    def test_different_seed_differs(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 5))
        y = rng.normal(size=60)
        m1 = fit_rfr(X, y, n_trees=15, seed=1)
        m2 = fit_rfr(X, y, n_trees=15, seed=2)
        assert m1.train_fingerprint != m2.train_fingerprint
        assert not np.array_equal(predict(m1, X), predict(m2, X))

    def test_predictions_within_leaf_bounds(self):
        rng = np.random.default_rng(6)
        for trial in range(10):
            X = rng.normal(size=(50, 3))
            y = rng.normal(size=50)
            model = fit_rfr(X, y, n_trees=8, seed=trial)
            vals = leaf_values(model.params)
            preds = predict(model, rng.normal(size=(40, 3)))
            assert np.all(preds >= vals.min() - 1e-12)
            assert np.all(preds <= vals.max() + 1e-12)

    def test_tree_order_permutation_invariance(self):
        from dataclasses import replace

        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        model = fit_rfr(X, y, n_trees=12, seed=0)
        shuffled = replace(
            model, params=replace(model.params, trees=tuple(reversed(model.params.trees)))
        )
        assert np.allclose(predict(model, X), predict(shuffled, X), atol=1e-12)

    def test_identical_stumps_forest(self):
        # every tree sees the same single-value data: prediction equals the stump output
        X = np.ones((10, 2))
        y = np.full(10, 2.5)
        model = fit_rfr(X, y, n_trees=7, seed=0)
        assert np.all(predict(model, np.zeros((3, 2))) == 2.5)

    def test_row_count_precondition(self):
        with pytest.raises(ValueError):
            fit_rfr(np.ones((5, 2)), np.ones(5), min_samples_leaf=3)

    def test_n_trees_precondition(self):
        with pytest.raises(ValueError):
            fit_rfr(np.ones((10, 2)), np.ones(10), n_trees=0)
