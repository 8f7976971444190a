"""Regression trees, bagged forests, and gradient boosting, built directly on
numpy so the importance definitions are exactly the ones the analyses report:
out-of-bag permutation increase in squared error for the forest, total split
gain for the boosted ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class _Node:
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    value: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None


def _best_split(X, y, idx, feature_ids, min_leaf):
    """Best (gain, feature, threshold) over the candidate features, or None.

    Gain is the reduction in sum of squared errors; thresholds are midpoints
    between consecutive distinct values.
    """
    y_node = y[idx]
    n = len(idx)
    if n < 2 * min_leaf:
        return None
    total = y_node.sum()
    sse_parent = float((y_node**2).sum() - total**2 / n)
    best = None
    for f in feature_ids:
        order = np.argsort(X[idx, f], kind="stable")
        xs = X[idx[order], f]
        ys = y_node[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys**2)
        cuts = np.arange(min_leaf, n - min_leaf + 1)
        cuts = cuts[xs[cuts - 1] != xs[cuts]]
        if len(cuts) == 0:
            continue
        left_sum = csum[cuts - 1]
        sse_left = csq[cuts - 1] - left_sum**2 / cuts
        right_sum = total - left_sum
        sse_right = (csq[-1] - csq[cuts - 1]) - right_sum**2 / (n - cuts)
        gain = sse_parent - sse_left - sse_right
        pick = int(np.argmax(gain))  # first max: deterministic tie-break
        if best is None or gain[pick] > best[0] + 1e-12:
            cut = int(cuts[pick])
            best = (float(gain[pick]), int(f), float(0.5 * (xs[cut - 1] + xs[cut])))
    if best is None or best[0] <= 1e-12:
        return None
    return best


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    rng: np.random.Generator | None = None,
    max_depth: int | None = None,
    min_leaf: int = 5,
    max_features: int | None = None,
    gains: dict[int, float] | None = None,
) -> _Node:
    """Grow one CART regression tree with variance-reduction splits.

    ``max_features`` draws a fresh feature subset at every node (forest
    behavior); ``gains`` accumulates split gain per feature id.
    """
    n_features = X.shape[1]

    def grow(idx, depth):
        node = _Node(value=float(y[idx].mean()))
        if len(idx) < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            return node
        if max_features is not None and max_features < n_features:
            feature_ids = np.sort(rng.choice(n_features, size=max_features, replace=False))
        else:
            feature_ids = np.arange(n_features)
        split = _best_split(X, y, idx, feature_ids, min_leaf)
        if split is None:
            return node
        gain, f, threshold = split
        if gains is not None:
            gains[f] = gains.get(f, 0.0) + gain
        mask = X[idx, f] <= threshold
        node.feature, node.threshold = f, threshold
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    return grow(np.arange(len(y)), 0)


def predict_tree(node: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))

    def walk(n, idx):
        if n.feature < 0:
            out[idx] = n.value
            return
        mask = X[idx, n.feature] <= n.threshold
        walk(n.left, idx[mask])
        walk(n.right, idx[~mask])

    walk(node, np.arange(len(X)))
    return out


def tree_features(node: _Node) -> set[int]:
    used: set[int] = set()

    def walk(n):
        if n.feature >= 0:
            used.add(n.feature)
            walk(n.left)
            walk(n.right)

    walk(node)
    return used


@dataclass
class ForestResult:
    importances: np.ndarray  # mean OOB permutation increase in squared error
    trees: list[_Node]


def random_forest_importance(
    X: np.ndarray,
    y: np.ndarray,
    *,
    seed: int = 0,
    n_trees: int = 100,
    min_leaf: int = 5,
) -> ForestResult:
    """Bootstrap forest; importance_f = mean over trees of the OOB squared-error
    increase when feature f is permuted among that tree's out-of-bag rows.
    """
    n, p = X.shape
    max_features = max(1, int(np.ceil(p / 3)))
    master = np.random.default_rng(seed)
    tree_seeds = master.integers(0, 2**63 - 1, size=n_trees)
    increases = np.zeros((n_trees, p))
    counted = np.zeros(p)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(tree_seeds[t])
        boot = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), boot)
        tree = build_tree(
            X[boot], y[boot], rng=rng, min_leaf=min_leaf, max_features=max_features
        )
        trees.append(tree)
        if len(oob) == 0:
            continue
        base = predict_tree(tree, X[oob])
        base_mse = float(np.mean((y[oob] - base) ** 2))
        used = tree_features(tree)
        for f in range(p):
            counted[f] += 1
            if f not in used:
                continue  # permuting an unused feature changes nothing
            Xp = X[oob].copy()
            Xp[:, f] = Xp[rng.permutation(len(oob)), f]
            perm_mse = float(np.mean((y[oob] - predict_tree(tree, Xp)) ** 2))
            increases[t, f] = perm_mse - base_mse
    importances = increases.sum(axis=0) / np.maximum(counted, 1)
    return ForestResult(importances=importances, trees=trees)


@dataclass
class BoostResult:
    gains: np.ndarray  # total split gain per feature
    train_losses: np.ndarray  # mean squared training error after each round
    base: float
    trees: list[_Node]
    learning_rate: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        pred = np.full(len(X), self.base)
        for tree in self.trees:
            pred += self.learning_rate * predict_tree(tree, X)
        return pred


def gradient_boost_importance(
    X: np.ndarray,
    y: np.ndarray,
    *,
    seed: int = 0,
    n_rounds: int = 200,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    min_leaf: int = 1,
) -> BoostResult:
    """Squared-loss gradient boosting; importance is total split gain."""
    n, p = X.shape
    rng = np.random.default_rng(seed)
    base = float(y.mean())
    pred = np.full(n, base)
    gains: dict[int, float] = {}
    trees = []
    losses = []
    for _ in range(n_rounds):
        residual = y - pred
        tree = build_tree(
            X, residual, rng=rng, max_depth=max_depth, min_leaf=min_leaf, gains=gains
        )
        trees.append(tree)
        pred = pred + learning_rate * predict_tree(tree, X)
        losses.append(float(np.mean((y - pred) ** 2)))
    gain_vec = np.zeros(p)
    for f, g in gains.items():
        gain_vec[f] = g
    return BoostResult(
        gains=gain_vec,
        train_losses=np.asarray(losses),
        base=base,
        trees=trees,
        learning_rate=learning_rate,
    )
