"""Soft-margin linear SVM trained by stochastic subgradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateTrainingError, EmptyTrainingError, ParameterError, ShapeError


def svm_objective(w, b, X, y_signed, C) -> float:
    """``0.5*||w||^2 + C * sum(hinge(y * (w.x + b)))``."""
    margins = y_signed * (X @ w + b)
    return float(0.5 * np.dot(w, w) + C * np.maximum(0.0, 1.0 - margins).sum())


@dataclass
class LinearSVM:
    weights: np.ndarray
    bias: float
    C: float
    epochs: int
    trained: bool = False
    objective_history: list = field(default_factory=list)
    raw_objective_history: list = field(default_factory=list)

    n_classes = 2

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.weights):
            raise ShapeError(f"SVM expects {len(self.weights)} features, got {X.shape[1]}")
        return X @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        # score exactly 0 is NORMAL, matching the strict rule sum(w*x) + b > 0
        return (self.decision_function(X) > 0).astype(np.int64)

    def predict_proba(self, X) -> np.ndarray:
        p = 1.0 / (1.0 + np.exp(-np.clip(self.decision_function(X), -500, 500)))
        return np.column_stack([1.0 - p, p])

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "C": self.C,
            "epochs": self.epochs,
            "objective_history": list(self.objective_history),
        }

    @classmethod
    def from_dict(cls, d) -> "LinearSVM":
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]), float(d["C"]),
                   int(d["epochs"]), trained=True, objective_history=list(d.get("objective_history", [])))


def train_svm(X, y, C: float = 1.0, epochs: int = 50, seed: int = 0) -> LinearSVM:
    """Minimize the soft-margin hinge objective with Pegasos-style steps.

    Labels are class indices (ATTACKED=1 -> +1, NORMAL=0 -> -1). Step size is
    ``1/(lam*t)`` with ``lam = 1/(C*N)``; the sample order is reshuffled every
    epoch from ``seed``. The bias rides along as a constant feature so it is
    shrunk with the weights, each iterate is projected back onto the ball of
    radius ``1/sqrt(lam)`` (which holds the optimum), and the returned
    hyperplane is the running average of all iterates. After each epoch the full-data objective of the
    average is measured; if it ever rises the previous average is kept, so
    ``objective_history`` is non-increasing. ``raw_objective_history`` holds
    the unguarded per-epoch values. Inputs are expected to be standardized.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyTrainingError("cannot train an SVM on an empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} samples but {y.shape[0]} labels")
    if C <= 0 or epochs < 1:
        raise ParameterError("C must be positive and epochs >= 1")
    if len(np.unique(y)) < 2:
        raise DegenerateTrainingError("SVM training needs both classes present")
    ys = np.where(y == 1, 1.0, -1.0)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    lam = 1.0 / (C * n)
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E7]))

    w = np.zeros(d + 1)
    avg = np.zeros(d + 1)
    best = avg.copy()
    best_obj = svm_objective(best[:d], best[d], X, ys, C)
    history = [best_obj]
    raw_history = [best_obj]
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            xi, yi = Xa[i], ys[i]
            margin = yi * (xi @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += (eta * yi) * xi
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            avg += (w - avg) / t
        obj = svm_objective(avg[:d], avg[d], X, ys, C)
        raw_history.append(obj)
        if obj <= best_obj:
            best_obj, best = obj, avg.copy()
        history.append(best_obj)
    return LinearSVM(best[:d].copy(), float(best[d]), float(C), int(epochs), trained=True,
                     objective_history=history, raw_objective_history=raw_history)
