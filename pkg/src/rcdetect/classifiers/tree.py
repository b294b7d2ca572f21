"""CART-style decision tree with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import EmptyTrainingError, ParameterError, ShapeError

LEAF = -1


def majority(counts: np.ndarray) -> int:
    """Index of the largest count; ties go to the highest class index.

    With NORMAL=0 / ATTACKED=1 this breaks ties toward ATTACKED.
    """
    counts = np.asarray(counts)
    return int(len(counts) - 1 - np.argmax(counts[::-1]))


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


@dataclass
class DecisionTree:
    """Flat-array binary tree.

    Node ``i`` is internal when ``feature[i] >= 0``; samples with
    ``x[feature] <= threshold`` go to ``left[i]``. ``counts[i]`` holds the
    training class counts reaching the node and ``label[i]`` its majority.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    label: np.ndarray
    n_features: int
    max_depth: int

    @property
    def n_classes(self) -> int:
        return self.counts.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] != LEAF:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ShapeError(f"tree expects {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            active = feat != LEAF
            if not active.any():
                break
            r, n, f = rows[active], node[active], feat[active]
            go_left = X[r, f] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
        return node

    def predict(self, X) -> np.ndarray:
        return self.label[self.apply(X)]

    def predict_proba(self, X) -> np.ndarray:
        c = self.counts[self.apply(X)].astype(float)
        return c / c.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d) -> "DecisionTree":
        counts = np.asarray(d["counts"], dtype=np.int64)
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            counts=counts,
            label=np.array([majority(c) for c in counts], dtype=np.int64),
            n_features=int(d["n_features"]),
            max_depth=int(d["max_depth"]),
        )


def _best_split(X, y_onehot, idx, features, min_leaf):
    """Lowest weighted Gini split over ``features`` for the samples ``idx``.

    Returns ``(feature, threshold, left_idx, right_idx)`` or ``None``. Ties keep
    the first candidate in feature order, then in ascending threshold order.
    """
    n = len(idx)
    best = None
    best_score = np.inf
    total = y_onehot[idx].sum(axis=0)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        distinct = xs_sorted[:-1] < xs_sorted[1:]
        if not distinct.any():
            continue
        left_n = np.arange(1, n)
        ok = distinct & (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not ok.any():
            continue
        cum = np.cumsum(y_onehot[idx[order]], axis=0)[:-1].astype(float)
        right = total - cum
        nl = left_n[:, None].astype(float)
        nr = (n - left_n)[:, None].astype(float)
        gl = 1.0 - np.sum((cum / nl) ** 2, axis=1)
        gr = 1.0 - np.sum((right / nr) ** 2, axis=1)
        score = (nl[:, 0] * gl + nr[:, 0] * gr) / n
        score = np.where(ok, score, np.inf)
        pos = int(np.argmin(score))
        if score[pos] < best_score:
            lo, hi = xs_sorted[pos], xs_sorted[pos + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best_score = score[pos]
            best = (int(f), float(thr), idx[order[: pos + 1]], idx[order[pos + 1:]])
    return best


def train_decision_tree(X, y, max_depth: int = 12, min_leaf: int = 1,
                        feature_subsample: Optional[int] = None,
                        rng: Optional[np.random.Generator] = None,
                        n_classes: Optional[int] = None,
                        sample_indices: Optional[np.ndarray] = None) -> DecisionTree:
    """Greedy top-down induction.

    Split candidates are midpoints between consecutive distinct values. A node
    becomes a leaf when it is pure, at ``max_depth``, or when no split leaves
    ``min_leaf`` samples on both sides. Impure nodes split even at zero Gini
    gain, which is what lets XOR-like data be separated. ``feature_subsample``
    draws that many candidate features per node from ``rng``.
    ``sample_indices`` (possibly with repeats) selects the training rows, as
    used for bootstrap samples.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyTrainingError("cannot train a decision tree on an empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} samples but {y.shape[0]} labels")
    if max_depth < 0 or min_leaf < 1:
        raise ParameterError("max_depth must be >= 0 and min_leaf >= 1")
    n_classes = int(n_classes if n_classes is not None else max(2, int(y.max()) + 1))
    d = X.shape[1]
    if feature_subsample is None or feature_subsample >= d:
        feature_subsample = None
    elif feature_subsample < 1:
        raise ParameterError("feature_subsample must be >= 1")
    if feature_subsample is not None and rng is None:
        rng = np.random.default_rng(0)
    y_onehot = np.eye(n_classes, dtype=np.int64)[y]

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(y_onehot[idx].sum(axis=0))
        return len(feature) - 1

    root_idx = np.arange(X.shape[0]) if sample_indices is None else np.asarray(sample_indices, dtype=np.int64)
    if len(root_idx) == 0:
        raise EmptyTrainingError("cannot train a decision tree on an empty sample")
    root = new_node(root_idx)
    stack = [(root, root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or np.count_nonzero(counts[node]) <= 1 or len(idx) < 2 * min_leaf:
            continue
        if feature_subsample is None:
            feats = range(d)
        else:
            feats = np.sort(rng.choice(d, size=feature_subsample, replace=False))
        split = _best_split(X, y_onehot, idx, feats, min_leaf)
        if split is None:
            continue
        f, thr, li, ri = split
        feature[node] = f
        threshold[node] = thr
        ln = new_node(li)
        rn = new_node(ri)
        left[node] = ln
        right[node] = rn
        # right pushed first so the left subtree is numbered first
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))

    counts_arr = np.vstack(counts).astype(np.int64)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=counts_arr,
        label=np.array([majority(c) for c in counts_arr], dtype=np.int64),
        n_features=d,
        max_depth=max_depth,
    )
