"""Random forest regression on CART trees grown by variance-minimizing splits.

Per-tree bootstrap samples and feature subsets come from independent seeded
streams (SeedSequence spawns), so trees could be built on parallel workers
while keeping the forest a pure function of (data, hyperparameters, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TreeNodes:
    """Binary regression tree in array form; feature == -1 marks a leaf."""

    feature: np.ndarray  # int, split feature per node
    threshold: np.ndarray  # float, split threshold per node
    left: np.ndarray  # int, left child index
    right: np.ndarray  # int, right child index
    value: np.ndarray  # float, leaf mean (defined for every node)
    n_samples: np.ndarray  # int, training rows reaching each node


@dataclass(frozen=True)
class ForestParams:
    trees: tuple[TreeNodes, ...]
    n_trees: int
    max_depth: int | None
    min_samples_leaf: int
    max_features: int
    seed: int


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int | None,
    min_samples_leaf: int,
    max_features: int,
) -> TreeNodes:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    n_samples: list[int] = []

    def new_node(idx: np.ndarray) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        vals = y[idx]
        # a pure node keeps the exact value; the mean of equal floats can
        # round away from them
        value.append(float(vals[0]) if np.all(vals == vals[0]) else float(vals.mean()))
        n_samples.append(int(idx.size))
        return node

    # Explicit stack: (node index, sample indices, depth).
    root_idx = np.arange(X.shape[0])
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = idx.size
        if (
            n < 2 * min_samples_leaf
            or (max_depth is not None and depth >= max_depth)
            or np.all(y[idx] == y[idx[0]])
        ):
            continue
        split = _best_split(X, y, idx, rng, max_features, min_samples_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        left_idx, right_idx = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((left[node], left_idx, depth + 1))
        stack.append((right[node], right_idx, depth + 1))

    return TreeNodes(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(n_samples, dtype=np.int64),
    )


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    rng: np.random.Generator,
    max_features: int,
    min_samples_leaf: int,
) -> tuple[int, float] | None:
    """Scan candidate features for the split minimizing total child SSE."""
    n = idx.size
    p = X.shape[1]
    candidates = rng.choice(p, size=min(max_features, p), replace=False)
    best_cost = math.inf
    best: tuple[int, float] | None = None
    for f in candidates:
        order = np.argsort(X[idx, f], kind="stable")
        xs = X[idx[order], f]
        ys = y[idx[order]]
        # prefix sums give left/right SSE in O(1) per cut position
        csum = np.cumsum(ys)
        csum2 = np.cumsum(ys * ys)
        total_sum, total_sq = csum[-1], csum2[-1]
        for cut in range(min_samples_leaf, n - min_samples_leaf + 1):
            if cut < 1 or cut >= n or xs[cut - 1] == xs[cut]:
                continue
            left_sum, left_sq = csum[cut - 1], csum2[cut - 1]
            right_sum, right_sq = total_sum - left_sum, total_sq - left_sq
            sse = (left_sq - left_sum * left_sum / cut) + (
                right_sq - right_sum * right_sum / (n - cut)
            )
            if sse < best_cost:
                best_cost = sse
                best = (int(f), float((xs[cut - 1] + xs[cut]) / 2.0))
    return best


def fit_forest_params(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 100,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    seed: int = 0,
) -> ForestParams:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    if X.shape[0] < 2 * min_samples_leaf:
        raise ValueError(
            f"need at least {2 * min_samples_leaf} rows for min_samples_leaf={min_samples_leaf}"
        )
    p = X.shape[1]
    if max_features is None:
        max_features = max(1, math.ceil(p / 3))  # regression default
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        sample = rng.integers(0, X.shape[0], size=X.shape[0])
        trees.append(
            _grow_tree(X[sample], y[sample], rng, max_depth, min_samples_leaf, max_features)
        )
    return ForestParams(
        trees=tuple(trees),
        n_trees=n_trees,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        max_features=max_features,
        seed=seed,
    )


def _predict_tree(tree: TreeNodes, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    for i in range(X.shape[0]):
        node = 0
        while tree.feature[node] >= 0:
            if X[i, tree.feature[node]] <= tree.threshold[node]:
                node = tree.left[node]
            else:
                node = tree.right[node]
        out[i] = tree.value[node]
    return out


def predict_forest(params: ForestParams, X: np.ndarray) -> np.ndarray:
    """Mean of per-tree predictions (order-invariant)."""
    X = np.asarray(X, dtype=np.float64)
    votes = np.empty((len(params.trees), X.shape[0]), dtype=np.float64)
    for k, tree in enumerate(params.trees):
        votes[k] = _predict_tree(tree, X)
    out = votes.mean(axis=0)
    # unanimous columns return the common value exactly (their true mean)
    unanimous = np.all(votes == votes[0], axis=0)
    out[unanimous] = votes[0, unanimous]
    return out


def leaf_values(params: ForestParams) -> np.ndarray:
    """All leaf values across the forest (for range checks)."""
    vals = []
    for tree in params.trees:
        vals.append(tree.value[tree.feature < 0])
    return np.concatenate(vals)
