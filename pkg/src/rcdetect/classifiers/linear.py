"""Weighted-sum threshold rule: ATTACKED iff sum(w_i * x_i) + b > threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..traffic import Label


@dataclass(frozen=True)
class LinearDecisionRule:
    weights: tuple
    bias: float = 0.0
    threshold: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias) or not np.isfinite(self.threshold):
            raise ValueError("linear rule parameters must be finite")

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.weights):
            raise ShapeError(f"rule has {len(self.weights)} weights, input has {X.shape[-1]} features")
        return X @ np.asarray(self.weights, dtype=float) + self.bias

    def predict(self, X) -> np.ndarray:
        return (np.atleast_1d(self.score(np.atleast_2d(X))) > self.threshold).astype(np.int64)

    @classmethod
    def from_svm(cls, svm, threshold: float = 0.0) -> "LinearDecisionRule":
        return cls(tuple(float(v) for v in svm.weights), float(svm.bias), threshold)


def apply_linear_rule(rule: LinearDecisionRule, x) -> Label:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("apply_linear_rule takes a single feature vector")
    return Label.ATTACKED if float(rule.score(x)) > rule.threshold else Label.NORMAL
