"""Deterministic regression trees: exact-greedy CART, gradient boosting, forests.

Trees are stored as flat node arrays so they serialize to JSON directly.
Split search is exact: candidate thresholds are midpoints between consecutive
distinct sorted feature values; ties between equally good splits resolve to
the lower feature index, then the lower threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

LEAF = -1


@dataclass
class RegressionTree:
    """Flat-array binary tree; node i is a leaf iff feature[i] == LEAF."""

    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray  # float, x <= threshold goes left
    left: np.ndarray       # int child indices
    right: np.ndarray
    value: np.ndarray      # float leaf values (0.0 on internal nodes)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[idx] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            node = idx[rows]
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            idx[rows] = np.where(go_left, self.left[node], self.right[node])
            active = self.feature[idx] != LEAF
        return self.value[idx]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int,
                feature_ids: np.ndarray) -> tuple[int, float, float] | None:
    """(feature, threshold, sse_gain) of the best exact split, or None."""
    n = y.size
    if n < 2 * min_leaf:
        return None
    total_sum = y.sum()
    base_sse_term = -(total_sum * total_sum) / n  # SSE = sum(y^2) + this
    best = None  # (negative gain surrogate, feature, threshold)
    for f in feature_ids:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = y[order]
        csum = np.cumsum(ys)
        k = np.arange(1, n)  # left side sizes
        valid = xs[1:] != xs[:-1]
        valid &= (k >= min_leaf) & (n - k >= min_leaf)
        if not valid.any():
            continue
        left_sum = csum[:-1]
        term = -(left_sum ** 2) / k - ((total_sum - left_sum) ** 2) / (n - k)
        term = np.where(valid, term, np.inf)
        i = int(np.argmin(term))  # first minimum: lowest threshold wins ties
        gain = base_sse_term - term[i]
        if gain <= 1e-15:
            continue
        thr = 0.5 * (xs[i] + xs[i + 1])
        if best is None or term[i] < best[0]:
            best = (term[i], int(f), float(thr))
    if best is None:
        return None
    return best[1], best[2], float(base_sse_term - best[0])


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int,
             rng: np.random.Generator | None = None,
             n_sub_features: int | None = None) -> RegressionTree:
    """Exact-greedy squared-error CART; optional per-split feature subsampling."""
    feature, threshold, left, right, value = [], [], [], [], []

    def add_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(0)
        right.append(0)
        value.append(0.0)
        return len(feature) - 1

    def build(rows: np.ndarray, depth: int) -> int:
        node = add_node()
        ys = y[rows]
        if depth >= max_depth or rows.size < 2 * min_leaf:
            value[node] = float(ys.mean())
            return node
        if n_sub_features is not None and n_sub_features < X.shape[1]:
            fids = np.sort(rng.choice(X.shape[1], size=n_sub_features, replace=False))
        else:
            fids = np.arange(X.shape[1])
        split = _best_split(X[rows], ys, min_leaf, fids)
        if split is None:
            value[node] = float(ys.mean())
            return node
        f, thr, _ = split
        mask = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(rows[mask], depth + 1)
        right[node] = build(rows[~mask], depth + 1)
        return node

    build(np.arange(y.size), 0)
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
    )


@dataclass
class TreeEnsemble:
    """Shared prediction form: initial + sum(weight_t * tree_t(x))."""

    kind: str                       # "gbt" | "rf"
    initial: float
    trees: list[RegressionTree]
    weights: list[float]
    train_mse_per_round: list[float] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], self.initial)
        for w, t in zip(self.weights, self.trees):
            out += w * t.predict(X)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "initial": self.initial,
            "weights": list(self.weights),
            "trees": [t.to_dict() for t in self.trees],
            "train_mse_per_round": list(self.train_mse_per_round),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            kind=d["kind"],
            initial=float(d["initial"]),
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            weights=[float(w) for w in d["weights"]],
            train_mse_per_round=[float(m) for m in d.get("train_mse_per_round", [])],
        )


def fit_gradient_boosting(X: np.ndarray, y: np.ndarray, rounds: int = 300,
                          max_depth: int = 3, learning_rate: float = 0.05,
                          min_leaf: int = 2) -> TreeEnsemble:
    """Squared-error gradient boosting on exact-greedy CART trees.

    Training MSE is recorded per round and asserted non-increasing; with
    mean-valued leaves and a learning rate in (0, 1] this holds exactly.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise InputError("gradient boosting needs >= 2 rows")
    initial = float(y.mean())
    pred = np.full(y.size, initial)
    trees, mses = [], []
    prev_mse = float(((y - pred) ** 2).mean())
    for _ in range(rounds):
        residual = y - pred
        tree = fit_tree(X, residual, max_depth=max_depth, min_leaf=min_leaf)
        pred = pred + learning_rate * tree.predict(X)
        mse = float(((y - pred) ** 2).mean())
        assert mse <= prev_mse + 1e-12, "boosting round increased training MSE"
        prev_mse = mse
        trees.append(tree)
        mses.append(mse)
    return TreeEnsemble(kind="gbt", initial=initial, trees=trees,
                        weights=[learning_rate] * rounds, train_mse_per_round=mses)


def fit_random_forest(X: np.ndarray, y: np.ndarray, n_trees: int = 200,
                      max_depth: int = 3, min_leaf: int = 2,
                      seed: int = 0) -> TreeEnsemble:
    """Bootstrap forest with ceil(sqrt(d)) per-split feature subsampling.

    Rows are canonically pre-sorted (lexicographic by features, then target)
    so the fitted model is invariant to training row permutations.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise InputError("random forest needs >= 2 rows")
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    canon = np.lexsort(keys)
    Xc, yc = X[canon], y[canon]
    n, d = Xc.shape
    mtry = int(np.ceil(np.sqrt(d)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n)
        trees.append(fit_tree(Xc[rows], yc[rows], max_depth=max_depth,
                              min_leaf=min_leaf, rng=rng, n_sub_features=mtry))
    return TreeEnsemble(kind="rf", initial=0.0, trees=trees,
                        weights=[1.0 / n_trees] * n_trees)
