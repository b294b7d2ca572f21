import json
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcdetect.classifiers import (
    DEFAULT_PARAMS,
    KINDS,
    LinearDecisionRule,
    ModelSpec,
    apply_linear_rule,
    dumps_model,
    kfold_split,
    loads_model,
    select_best_model,
    svm_objective,
    sweep_tree_count,
    train_baseline,
    train_decision_tree,
    train_gaussian_nb,
    train_knn,
    train_model,
    train_random_forest,
    train_svm,
)
from rcdetect.classifiers.tree import LEAF
from rcdetect.errors import (
    DegenerateTrainingError,
    EmptyTrainingError,
    ParameterError,
    SchemaError,
    ShapeError,
)
from rcdetect.features import FEATURE_NAMES
from rcdetect.traffic import Label


def walk(tree, x):
    """Reference root-to-leaf evaluation, one node at a time."""
    node = 0
    while tree.feature[node] != LEAF:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return int(tree.label[node])


def blobs(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-2, 1, (n // 2, 2)), rng.normal(2, 1, (n // 2, 2))])
    y = np.r_[np.zeros(n // 2), np.ones(n // 2)].astype(np.int64)
    return X, y


# -- linear rule -----------------------------------------------------------------

@pytest.mark.parametrize("w,threshold,x,expected", [
    ((1, 1), 0.0, (0, 0), Label.NORMAL),
    ((1, 0), 0.5, (1, 7), Label.ATTACKED),
    ((-1, 0), 0.5, (1, 7), Label.NORMAL),
])
def test_linear_rule(w, threshold, x, expected):
    assert apply_linear_rule(LinearDecisionRule(np.array(w, float), 0.0, threshold), np.array(x, float)) is expected


def test_linear_rule_dimension_mismatch():
    with pytest.raises(ShapeError):
        apply_linear_rule(LinearDecisionRule(np.ones(2), 0.0, 0.0), np.ones(3))


def test_linear_rule_agrees_with_svm():
    X, y = blobs(3)
    svm = train_svm(X, y, C=1.0, epochs=10, seed=1)
    rule = LinearDecisionRule.from_svm(svm)
    probes = np.random.default_rng(9).normal(0, 3, (300, 2))
    assert [int(apply_linear_rule(rule, p)) for p in probes] == svm.predict(probes).tolist()


# -- decision tree ---------------------------------------------------------------

def test_tree_separable_pair():
    t = train_decision_tree(np.array([[0.0], [1.0]]), np.array([0, 1]))
    assert t.feature[0] == 0 and t.threshold[0] == 0.5
    assert t.predict(np.array([[0.0], [1.0]])).tolist() == [0, 1]


def test_tree_pure_root():
    t = train_decision_tree(np.random.default_rng(0).normal(size=(20, 3)), np.zeros(20, dtype=int))
    assert t.n_nodes == 1 and t.predict(np.random.default_rng(1).normal(size=(50, 3))).tolist() == [0] * 50


def test_tree_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    t = train_decision_tree(X, y, max_depth=2)
    assert [walk(t, x) for x in X] == y.tolist()
    assert t.depth() <= 2


def test_tree_leaf_tie_goes_to_attacked():
    t = train_decision_tree(np.array([[1.0], [1.0]]), np.array([0, 1]))
    assert t.predict(np.array([[1.0]]))[0] == 1


def test_tree_errors():
    with pytest.raises(EmptyTrainingError):
        train_decision_tree(np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_tree_depth_limit():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 3))
    y = rng.integers(0, 2, 200)
    for depth in (0, 1, 3):
        assert train_decision_tree(X, y, max_depth=depth).depth() <= depth


def small_dataset(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 65))
    d = int(rng.integers(1, 5))
    X = np.round(rng.normal(size=(n, d)), 1)
    y = rng.integers(0, 2, n)
    return X, y, rng.normal(size=(40, d))


@pytest.mark.parametrize("seed", range(10))
def test_tree_matches_reference_walk(seed):
    X, y, probes = small_dataset(seed)
    t = train_decision_tree(X, y, max_depth=6)
    assert t.predict(probes).tolist() == [walk(t, p) for p in probes]


# -- forest ----------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_forest_matches_tree_majority(seed):
    X, y, probes = small_dataset(100 + seed)
    forest = train_random_forest(X, y, n_trees=int(seed % 4) * 2 + 2, seed=seed)
    for p in probes:
        votes = [walk(t, p) for t in forest.trees]
        expected = 1 if votes.count(1) >= votes.count(0) else 0
        assert forest.predict(p[None, :])[0] == expected


def test_single_tree_forest_equals_its_tree():
    X, y, probes = small_dataset(7)
    f = train_random_forest(X, y, n_trees=1, max_depth=50, seed=3)
    assert f.predict(probes).tolist() == f.trees[0].predict(probes).tolist()


def test_forest_determinism_and_seed_effect():
    X, y, probes = small_dataset(11)
    a = train_random_forest(X, y, n_trees=5, seed=1)
    b = train_random_forest(X, y, n_trees=5, seed=1)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert a.predict(probes).tolist() == b.predict(probes).tolist()


def test_forest_errors():
    X, y, _ = small_dataset(1)
    with pytest.raises(ParameterError):
        train_random_forest(X, y, n_trees=0)


# -- SVM -------------------------------------------------------------------------

def test_svm_separable_pair():
    svm = train_svm(np.array([[-1.0], [1.0]]), np.array([0, 1]), C=100.0, epochs=50)
    assert svm.predict(np.array([[-1.0], [1.0]])).tolist() == [0, 1]
    assert svm.weights[0] > 0


def test_svm_label_flip_symmetry():
    X, y = blobs(4)
    a = train_svm(X, y, seed=2)
    b = train_svm(X, 1 - y, seed=2)
    probes = np.random.default_rng(0).normal(0, 3, (200, 2))
    assert np.all(a.predict(probes) != b.predict(probes))


def test_svm_two_blobs_against_grid_search():
    X, y = blobs(0)
    svm = train_svm(X, y, C=1.0, epochs=50, seed=0)
    acc = (svm.predict(X) == y).mean()
    ys = np.where(y == 1, 1.0, -1.0)
    best_grid = 0.0
    for angle in np.linspace(0, 2 * np.pi, 72, endpoint=False):
        w = np.array([np.cos(angle), np.sin(angle)])
        for b in np.linspace(-3, 3, 61):
            best_grid = max(best_grid, ((X @ w + b > 0) == (ys > 0)).mean())
    assert acc >= 0.95
    assert acc >= best_grid - 0.02


def test_svm_objective_non_increasing():
    X, y = blobs(1)
    svm = train_svm(X, y, C=1.0, epochs=30, seed=5)
    h = svm.objective_history
    assert all(b <= a + 1e-6 * h[0] for a, b in zip(h, h[1:]))
    ys = np.where(y == 1, 1.0, -1.0)
    assert svm_objective(svm.weights, svm.bias, X, ys, 1.0) == pytest.approx(h[-1])


def test_svm_single_class():
    with pytest.raises(DegenerateTrainingError):
        train_svm(np.ones((4, 2)), np.ones(4, dtype=int))


@pytest.mark.parametrize("scale", [0.25, 4.0, 1024.0])
def test_svm_rescaling_absorbed_by_standardization(scale):
    X, y = blobs(6)
    probes = np.random.default_rng(1).normal(0, 3, (100, 2))
    a = train_model(ModelSpec("svm"), X, y, "TCP", seed=3, feature_names=("a", "b"))
    b = train_model(ModelSpec("svm"), X * scale, y, "TCP", seed=3, feature_names=("a", "b"))
    assert a.predict(probes).tolist() == b.predict(probes * scale).tolist()


# -- baselines -------------------------------------------------------------------

def test_knn_exact_match():
    X = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 1.0]])
    knn = train_knn(X, np.array([1, 0, 1]), k=1)
    assert knn.predict(X).tolist() == [1, 0, 1]


def test_knn_three_against_brute_force():
    X = np.array([[0, 0], [1, 0], [0, 2], [3, 3], [4, 1]], dtype=float)
    y = np.array([0, 0, 1, 1, 1])
    knn = train_knn(X, y, k=3)
    for probe in np.array([[0.5, 0.5], [2.5, 2.0], [1.0, 1.0], [3.0, 0.0]]):
        d = [((probe - x) ** 2).sum() for x in X]
        order = sorted(range(5), key=lambda i: (d[i], i))[:3]
        votes = [y[i] for i in order]
        assert knn.predict(probe[None, :])[0] == (1 if sum(votes) >= 2 else 0)


def test_knn_distance_ties_prefer_lower_index():
    X = np.array([[1.0], [-1.0], [1.0]])
    knn = train_knn(X, np.array([0, 1, 1]), k=1)
    assert knn.neighbours(np.array([[0.0]]))[0].tolist() == [0]


def test_knn_parameter_errors():
    with pytest.raises(ParameterError):
        train_knn(np.zeros((4, 1)), np.zeros(4, dtype=int), k=2)
    with pytest.raises(ParameterError):
        train_knn(np.zeros((2, 1)), np.zeros(2, dtype=int), k=3)


def test_nb_prior_decides_identical_likelihoods():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(10, 2))
    X = np.vstack([np.repeat(base, 9, axis=0), base])
    y = np.r_[np.zeros(90), np.ones(10)].astype(int)
    nb = train_gaussian_nb(X, y)
    assert set(nb.predict(rng.normal(0, 2, (50, 2))).tolist()) == {0}


def test_nb_variance_floor():
    nb = train_gaussian_nb(np.array([[1.0], [1.0], [2.0], [2.0]]), np.array([0, 0, 1, 1]))
    assert np.all(nb.variances >= 1e-9)
    assert nb.predict(np.array([[1.0], [2.0]])).tolist() == [0, 1]


def test_train_baseline_kinds():
    X, y = blobs(2, 60)
    m = train_baseline("knn", X, y, {"k": 3}, protocol="TCP")
    assert m.kind == "knn"
    with pytest.raises(ParameterError):
        train_baseline("rf", X, y)


# -- folds, sweep, selection -----------------------------------------------------

def test_kfold_exact_and_remainder():
    assert sorted(len(f) for f in kfold_split(10, 5, 0)) == [2] * 5
    assert sorted(len(f) for f in kfold_split(11, 5, 0)) == [2, 2, 2, 2, 3]


def test_kfold_sixty_six_thousand():
    folds = kfold_split(66000, 5, seed=1)
    seen = np.zeros(66000, dtype=int)
    for f in folds:
        seen[f] += 1
    assert np.all(seen == 1)
    assert [len(f) for f in folds] == [13200] * 5


@settings(max_examples=100)
@given(st.integers(2, 300), st.integers(2, 20), st.integers(0, 2**31))
def test_kfold_partition(n, k, seed):
    if k > n:
        with pytest.raises(ParameterError):
            kfold_split(n, k, seed)
        return
    folds = kfold_split(n, k, seed)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))
    assert [f.tolist() for f in folds] == [f.tolist() for f in kfold_split(n, k, seed)]


def test_kfold_k_too_small():
    with pytest.raises(ParameterError):
        kfold_split(10, 1)


def test_sweep_single_candidate_and_tie():
    X, y = blobs(0, 60)
    chosen, means = sweep_tree_count(X, y, 3, [7], seed=0)
    assert chosen == 7 and set(means) == {7}
    chosen, means = sweep_tree_count(X * 10, y, 3, [9, 3], seed=0)
    if means[3] == means[9]:
        assert chosen == 3


def test_sweep_noisy_candidates_deterministic():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(150, 3))
    y = ((X[:, 0] + rng.normal(0, 0.8, 150)) > 0).astype(int)
    first = sweep_tree_count(X, y, 5, [1, 25], seed=4)
    assert first == sweep_tree_count(X, y, 5, [1, 25], seed=4)
    assert first[0] in (1, 25)


def _fixed(preds, kind="x"):
    return SimpleNamespace(kind=kind, predict=lambda X: np.asarray(preds))


def test_select_best_model():
    y = np.array([1] * 50 + [0] * 50)
    a = _fixed(y.copy(), "a")
    b_pred = y.copy()
    b_pred[:5] = 0
    b = _fixed(b_pred, "b")
    X = np.zeros((100, 1))
    assert select_best_model([a], X, y)[0] is a
    best, scores = select_best_model([b, a], X, y, "accuracy")
    assert best is a and scores == [Fraction(95, 100), Fraction(1)]
    assert select_best_model([a, _fixed(y.copy())], X, y, "F1")[0] is a
    with pytest.raises(ParameterError):
        select_best_model([a], X[:0], y[:0])
    with pytest.raises(ParameterError):
        select_best_model([a], X, y, "auc")


# -- persistence -------------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_model_round_trip(kind):
    X, y = blobs(8, 80)
    X = np.hstack([X, X[:, :1] * 0.5 + 1])
    probes = np.random.default_rng(2).normal(0, 3, (60, 3))
    params = {"k": 3} if kind == "knn" else {}
    m = train_model(ModelSpec(kind, params), X, y, "UDP", seed=5, feature_names=("a", "b", "c"))
    text = dumps_model(m, meta={"seed": 5})
    back = loads_model(text)
    assert back.predict(probes).tolist() == m.predict(probes).tolist()
    assert np.array_equal(back.predict_proba(probes), m.predict_proba(probes))
    assert dumps_model(back, meta={"seed": 5}) == text
    assert back.protocol == "UDP" and back.kind == kind


@pytest.mark.parametrize("kind", KINDS)
def test_training_is_deterministic(kind):
    X, y = blobs(9, 60)
    a = train_model(ModelSpec(kind), X, y, "TCP", seed=1, feature_names=("a", "b"))
    b = train_model(ModelSpec(kind), X, y, "TCP", seed=1, feature_names=("a", "b"))
    assert dumps_model(a) == dumps_model(b)


def test_general_slot_expects_one_hot():
    X, y = blobs(1, 40)
    X = np.hstack([X, np.zeros((40, len(FEATURE_NAMES) - 2)), np.ones((40, 1)), np.zeros((40, 1))])
    m = train_model(ModelSpec("dt"), X, y, "GENERAL")
    assert m.feature_names[-2:] == ("is_tcp", "is_udp")
    with pytest.raises(ShapeError):
        m.predict(np.zeros((1, len(FEATURE_NAMES))))


def test_bad_model_documents():
    with pytest.raises(SchemaError):
        loads_model("{not json")
    with pytest.raises(SchemaError):
        loads_model(json.dumps({"format": "other"}))
    with pytest.raises(SchemaError):
        loads_model(json.dumps({"format": "rcdetect.model", "version": 99}))


def test_spec_validation():
    with pytest.raises(ParameterError):
        ModelSpec("boost")
    with pytest.raises(ParameterError):
        ModelSpec("rf", {"trees": 3})
    assert ModelSpec("rf").resolved() == DEFAULT_PARAMS["rf"]
    assert DEFAULT_PARAMS["rf"]["n_trees"] == 25 and DEFAULT_PARAMS["svm"] == {"C": 1.0, "epochs": 50}
