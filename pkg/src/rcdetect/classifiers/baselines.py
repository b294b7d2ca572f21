"""K-nearest-neighbour and Gaussian naive Bayes baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import EmptyTrainingError, ParameterError, ShapeError

NB_VARIANCE_FLOOR = 1e-9


def _highest_argmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties resolved to the highest column index."""
    k = scores.shape[1]
    return (k - 1 - np.argmax(scores[:, ::-1], axis=1)).astype(np.int64)


@dataclass
class KNN:
    k: int
    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def neighbours(self, X) -> np.ndarray:
        """Indices of the ``k`` nearest training rows; equal distances favour lower indices."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.X.shape[1]:
            raise ShapeError(f"KNN expects {self.X.shape[1]} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.k), dtype=np.int64)
        for start in range(0, X.shape[0], 256):
            chunk = X[start:start + 256]
            d2 = ((chunk[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            out[start:start + 256] = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return out

    def votes(self, X) -> np.ndarray:
        labels = self.y[self.neighbours(X)]
        return np.stack([(labels == c).sum(axis=1) for c in range(self.n_classes)], axis=1)

    def predict(self, X) -> np.ndarray:
        return _highest_argmax(self.votes(X))

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X) / float(self.k)

    def to_dict(self) -> dict:
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist(), "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d) -> "KNN":
        return cls(int(d["k"]), np.asarray(d["X"], dtype=float), np.asarray(d["y"], dtype=np.int64),
                   int(d["n_classes"]))


def train_knn(X, y, k: int = 5, n_classes: Optional[int] = None) -> KNN:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyTrainingError("cannot fit KNN on an empty dataset")
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"k must be a positive odd number, got {k}")
    if k > X.shape[0]:
        raise ParameterError(f"k={k} exceeds the {X.shape[0]} training samples")
    n_classes = int(n_classes if n_classes is not None else max(2, int(y.max()) + 1))
    return KNN(int(k), X.copy(), y.copy(), n_classes)


@dataclass
class GaussianNB:
    means: np.ndarray      # (n_classes, d)
    variances: np.ndarray  # (n_classes, d)
    log_priors: np.ndarray  # (n_classes,)

    @property
    def n_classes(self) -> int:
        return len(self.log_priors)

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.means.shape[1]:
            raise ShapeError(f"NB expects {self.means.shape[1]} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.n_classes))
        for c in range(self.n_classes):
            if not np.isfinite(self.log_priors[c]):
                out[:, c] = -np.inf
                continue
            var = self.variances[c]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - self.means[c]) ** 2 / var)
            out[:, c] = self.log_priors[c] + ll.sum(axis=1)
        return out

    def predict(self, X) -> np.ndarray:
        return _highest_argmax(self.joint_log_likelihood(X))

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        jll = jll - jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "variances": self.variances.tolist(),
                "log_priors": [float(v) if np.isfinite(v) else None for v in self.log_priors]}

    @classmethod
    def from_dict(cls, d) -> "GaussianNB":
        lp = np.array([-np.inf if v is None else v for v in d["log_priors"]], dtype=float)
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["variances"], dtype=float), lp)


def train_gaussian_nb(X, y, n_classes: Optional[int] = None, var_floor: float = NB_VARIANCE_FLOOR) -> GaussianNB:
    """Per-class feature means and population variances (floored), plus log priors.

    Classes absent from the data get a log prior of -inf and never win.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyTrainingError("cannot fit naive Bayes on an empty dataset")
    n_classes = int(n_classes if n_classes is not None else max(2, int(y.max()) + 1))
    d = X.shape[1]
    means = np.zeros((n_classes, d))
    variances = np.ones((n_classes, d))
    log_priors = np.full(n_classes, -np.inf)
    for c in range(n_classes):
        rows = X[y == c]
        if len(rows) == 0:
            continue
        means[c] = rows.mean(axis=0)
        variances[c] = np.maximum(rows.var(axis=0), var_floor)
        log_priors[c] = np.log(len(rows) / X.shape[0])
    return GaussianNB(means, variances, log_priors)
