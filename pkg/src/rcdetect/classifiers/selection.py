"""Fold splitting, tree-count sweep and best-model selection."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import ParameterError
from ..metrics import UNDEFINED, accuracy, confusion, evaluate_counts
from .model import ModelSpec, TrainedModel, train_model

CRITERIA = {"accuracy": "acc", "acc": "acc", "PoD": "p_d", "pod": "p_d", "p_d": "p_d", "F1": "f1", "f1": "f1"}


def kfold_split(n: int, k: int, seed: int = 0) -> list:
    """Shuffle ``range(n)`` with ``seed`` and cut it into ``k`` near-equal folds."""
    if k < 2:
        raise ParameterError(f"K must be at least 2, got {k}")
    if k > n:
        raise ParameterError(f"K={k} exceeds the {n} samples")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF01D])).permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def fold_accuracies(spec: ModelSpec, X, y, k: int, seed: int = 0, protocol: str = "GENERAL") -> list:
    """Train on k-1 folds, score the held-out fold, k times. Returns exact accuracies."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    folds = kfold_split(len(y), k, seed)
    out = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        model = train_model(spec, X[train], y[train], protocol=protocol, seed=seed)
        out.append(accuracy(confusion(model.predict(X[test]), y[test])))
    return out


def sweep_tree_count(X, y, k: int, candidates: Sequence[int], seed: int = 0,
                     base_params: dict | None = None, protocol: str = "GENERAL"):
    """Pick the forest size with the highest mean k-fold accuracy.

    Returns ``(chosen, {n_trees: mean_accuracy})``; ties go to the smaller forest.
    """
    candidates = list(candidates)
    if not candidates:
        raise ParameterError("tree-count sweep needs at least one candidate")
    means = {}
    for n_trees in candidates:
        spec = ModelSpec("rf", {**(base_params or {}), "n_trees": int(n_trees)})
        accs = fold_accuracies(spec, X, y, k, seed, protocol)
        means[int(n_trees)] = sum(accs, Fraction(0)) / len(accs)
    best = max(means.values())
    chosen = min(n for n, m in means.items() if m == best)
    return chosen, means


def _criterion_value(report, criterion):
    value = getattr(report, CRITERIA[criterion])
    return Fraction(-1) if value is UNDEFINED else value


def select_best_model(candidates: Sequence[TrainedModel], X_val, y_val, criterion: str = "accuracy"):
    """Return ``(best_model, scores)``; ties keep the earlier candidate."""
    if not candidates:
        raise ParameterError("no candidate models to select from")
    if criterion not in CRITERIA:
        raise ParameterError(f"criterion must be one of accuracy, PoD, F1; got {criterion!r}")
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(y_val) == 0:
        raise ParameterError("validation set is empty")
    scores = []
    for model in candidates:
        report = evaluate_counts(confusion(model.predict(X_val), y_val))
        scores.append(_criterion_value(report, criterion))
    best = max(range(len(candidates)), key=lambda i: (scores[i], -i))
    return candidates[best], scores
