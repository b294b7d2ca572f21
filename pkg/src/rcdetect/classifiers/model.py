"""Trained-model wrapper, training dispatch and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ParameterError, SchemaError, ShapeError
from ..features import FEATURE_NAMES, PROTOCOL_ONE_HOT, StandardizationParams, feature_matrix, standardize
from .baselines import KNN, GaussianNB, train_gaussian_nb, train_knn
from .forest import RandomForest, train_random_forest
from .svm import LinearSVM, train_svm
from .tree import DecisionTree, train_decision_tree

MODEL_FORMAT = "rcdetect.model"
MODEL_VERSION = 1
KINDS = ("rf", "svm", "dt", "knn", "nb")
PROTOCOL_SLOTS = ("TCP", "UDP", "GENERAL")
BINARY_CLASSES = ("NORMAL", "ATTACKED")

DEFAULT_PARAMS = {
    "rf": {"n_trees": 25, "max_depth": 12, "feature_subsample": "sqrt", "min_leaf": 1},
    "svm": {"C": 1.0, "epochs": 50},
    "dt": {"max_depth": 12, "min_leaf": 1},
    "knn": {"k": 5},
    "nb": {},
}

_ESTIMATORS = {"rf": RandomForest, "svm": LinearSVM, "dt": DecisionTree, "knn": KNN, "nb": GaussianNB}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown classifier kind {self.kind!r}; choose from {', '.join(KINDS)}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ParameterError(f"unknown {self.kind} parameters: {sorted(unknown)}")

    def resolved(self) -> dict:
        return {**DEFAULT_PARAMS[self.kind], **self.params}


@dataclass
class TrainedModel:
    kind: str
    protocol: str
    estimator: object
    standardization: StandardizationParams
    params: dict
    seed: int
    classes: tuple = BINARY_CLASSES
    feature_names: tuple = FEATURE_NAMES

    @property
    def one_hot(self) -> bool:
        return self.protocol == "GENERAL"

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise ShapeError(
                f"{self.kind} model expects {len(self.feature_names)} features, got {X.shape[1]}"
            )
        return self.standardization.apply(X)

    def predict(self, X) -> np.ndarray:
        return self.estimator.predict(self._prepare(X))

    def predict_proba(self, X) -> np.ndarray:
        return self.estimator.predict_proba(self._prepare(X))

    def decision_scores(self, X) -> np.ndarray:
        """Real-valued score, larger meaning more attack-like.

        Signed margin for the SVM, ATTACKED probability / vote fraction otherwise.
        """
        Z = self._prepare(X)
        if self.kind == "svm":
            return self.estimator.decision_function(Z)
        return self.estimator.predict_proba(Z)[:, -1]

    def matrix(self, features: Sequence) -> np.ndarray:
        return feature_matrix(features, one_hot=self.one_hot)

    def predict_features(self, features: Sequence) -> np.ndarray:
        return self.predict(self.matrix(features))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "protocol": self.protocol,
            "classes": list(self.classes),
            "feature_names": list(self.feature_names),
            "params": self.params,
            "seed": self.seed,
            "standardization": self.standardization.to_dict(),
            "model": self.estimator.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise SchemaError(f"not a {MODEL_FORMAT} document")
        if d.get("version") != MODEL_VERSION:
            raise SchemaError(f"unsupported model version {d.get('version')}")
        kind = d["kind"]
        if kind not in _ESTIMATORS:
            raise SchemaError(f"unknown model kind {kind!r}")
        return cls(
            kind=kind,
            protocol=d["protocol"],
            estimator=_ESTIMATORS[kind].from_dict(d["model"]),
            standardization=StandardizationParams.from_dict(d["standardization"]),
            params=d["params"],
            seed=int(d["seed"]),
            classes=tuple(d["classes"]),
            feature_names=tuple(d["feature_names"]),
        )


def dumps_model(model: TrainedModel, meta: Optional[dict] = None) -> str:
    doc = model.to_dict()
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def loads_model(text: str) -> TrainedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from None
    try:
        return TrainedModel.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"model file is missing or mistypes field {exc}") from None


def save_model(model: TrainedModel, path, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model, meta))


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def train_model(spec: ModelSpec, X, y, protocol: str = "GENERAL", seed: int = 0,
                classes: Sequence[str] = BINARY_CLASSES, feature_names: Optional[Sequence[str]] = None) -> TrainedModel:
    """Standardize ``X`` on itself and fit the estimator named by ``spec``.

    ``X`` is the raw feature matrix; GENERAL models expect the two protocol
    one-hot columns appended (see ``feature_matrix(..., one_hot=True)``).
    Matrices of any other width get positional column names.
    """
    if protocol not in PROTOCOL_SLOTS:
        raise ParameterError(f"protocol slot must be one of {PROTOCOL_SLOTS}, got {protocol!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if feature_names is None:
        feature_names = FEATURE_NAMES + (PROTOCOL_ONE_HOT if protocol == "GENERAL" else ())
        if X.shape[1] != len(feature_names):
            # not traffic features: name the columns by position
            feature_names = tuple(f"x{i}" for i in range(X.shape[1]))
    if X.shape[1] != len(feature_names):
        raise ShapeError(f"{len(feature_names)} feature names for {X.shape[1]} columns")
    Z, params = standardize(X) if X.shape[0] >= 2 else (X, StandardizationParams(
        tuple([0.0] * X.shape[1]), tuple([1.0] * X.shape[1]), tuple([True] * X.shape[1])))
    p = spec.resolved()
    n_classes = len(classes)
    if spec.kind == "rf":
        est = train_random_forest(Z, y, n_trees=p["n_trees"], max_depth=p["max_depth"],
                                  feature_subsample=p["feature_subsample"], seed=seed,
                                  min_leaf=p["min_leaf"], n_classes=n_classes)
    elif spec.kind == "svm":
        if n_classes != 2:
            raise ParameterError("the linear SVM is binary only")
        est = train_svm(Z, y, C=p["C"], epochs=p["epochs"], seed=seed)
    elif spec.kind == "dt":
        est = train_decision_tree(Z, y, max_depth=p["max_depth"], min_leaf=p["min_leaf"], n_classes=n_classes)
    elif spec.kind == "knn":
        est = train_knn(Z, y, k=p["k"], n_classes=n_classes)
    else:
        est = train_gaussian_nb(Z, y, n_classes=n_classes)
    return TrainedModel(spec.kind, protocol, est, params, p, int(seed), tuple(classes), tuple(feature_names))


def train_baseline(kind: str, X, y, params: Optional[dict] = None, protocol: str = "GENERAL", seed: int = 0) -> TrainedModel:
    if kind not in ("knn", "nb"):
        raise ParameterError(f"baseline kind must be 'knn' or 'nb', got {kind!r}")
    return train_model(ModelSpec(kind, params or {}), X, y, protocol=protocol, seed=seed)
