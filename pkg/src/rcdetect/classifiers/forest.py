"""Bagged random forest over :class:`DecisionTree`."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ParameterError, ShapeError, TrainingError
from .tree import DecisionTree, train_decision_tree


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one tree."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tree_index)]))


def default_feature_subsample(n_features: int) -> int:
    return max(1, int(round(math.sqrt(n_features))))


@dataclass
class RandomForest:
    trees: list
    seed: int
    feature_subsample: Optional[int]
    n_classes: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def tree_predictions(self, X) -> np.ndarray:
        """``(n_trees, n_samples)`` matrix of per-tree class predictions."""
        return np.vstack([t.predict(X) for t in self.trees])

    def votes(self, X) -> np.ndarray:
        preds = self.tree_predictions(X)
        out = np.zeros((preds.shape[1], self.n_classes), dtype=np.int64)
        for k in range(self.n_classes):
            out[:, k] = (preds == k).sum(axis=0)
        return out

    def predict(self, X) -> np.ndarray:
        v = self.votes(X)
        # argmax over reversed columns: ties go to the highest class index (ATTACKED)
        return (self.n_classes - 1 - np.argmax(v[:, ::-1], axis=1)).astype(np.int64)

    def predict_proba(self, X) -> np.ndarray:
        """Vote fractions per class."""
        return self.votes(X) / float(self.n_trees)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "feature_subsample": self.feature_subsample,
            "n_classes": self.n_classes,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "RandomForest":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            seed=int(d["seed"]),
            feature_subsample=d["feature_subsample"],
            n_classes=int(d["n_classes"]),
        )


def train_random_forest(X, y, n_trees: int = 25, max_depth: int = 12, feature_subsample="sqrt",
                        seed: int = 0, min_leaf: int = 1, n_classes: Optional[int] = None) -> RandomForest:
    """Train ``n_trees`` trees, each on a same-size bootstrap resample.

    Tree ``i`` draws its bootstrap and per-node feature subsets from
    ``tree_rng(seed, i)``, so the forest is a pure function of its inputs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if n_trees < 1:
        raise ParameterError(f"n_trees must be >= 1, got {n_trees}")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} samples but {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise TrainingError("a random forest needs at least 2 samples")
    n_classes = int(n_classes if n_classes is not None else max(2, int(y.max()) + 1))
    if feature_subsample == "sqrt":
        feature_subsample = default_feature_subsample(X.shape[1])
    n = X.shape[0]
    trees = []
    for i in range(n_trees):
        rng = tree_rng(seed, i)
        sample = rng.integers(0, n, size=n)
        trees.append(train_decision_tree(
            X, y, max_depth=max_depth, min_leaf=min_leaf, feature_subsample=feature_subsample,
            rng=rng, n_classes=n_classes, sample_indices=sample,
        ))
    return RandomForest(trees, int(seed), feature_subsample, n_classes)
