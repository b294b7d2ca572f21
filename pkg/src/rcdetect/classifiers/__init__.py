"""Detection models: trees, forests, linear SVM, KNN, naive Bayes."""

from .baselines import KNN, GaussianNB, train_gaussian_nb, train_knn
from .forest import RandomForest, train_random_forest, tree_rng
from .linear import LinearDecisionRule, apply_linear_rule
from .model import (
    BINARY_CLASSES,
    DEFAULT_PARAMS,
    KINDS,
    ModelSpec,
    TrainedModel,
    dumps_model,
    load_model,
    loads_model,
    save_model,
    train_baseline,
    train_model,
)
from .selection import fold_accuracies, kfold_split, select_best_model, sweep_tree_count
from .svm import LinearSVM, svm_objective, train_svm
from .tree import DecisionTree, majority, train_decision_tree

__all__ = [
    "KNN", "GaussianNB", "train_gaussian_nb", "train_knn",
    "RandomForest", "train_random_forest", "tree_rng",
    "LinearDecisionRule", "apply_linear_rule",
    "BINARY_CLASSES", "DEFAULT_PARAMS", "KINDS", "ModelSpec", "TrainedModel",
    "dumps_model", "load_model", "loads_model", "save_model", "train_baseline", "train_model",
    "fold_accuracies", "kfold_split", "select_best_model", "sweep_tree_count",
    "LinearSVM", "svm_objective", "train_svm",
    "DecisionTree", "majority", "train_decision_tree",
]
