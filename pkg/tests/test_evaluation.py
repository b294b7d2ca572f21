import csv
import io
from fractions import Fraction

import numpy as np
import pytest

from rcdetect.classifiers import ModelSpec
from rcdetect.errors import ParameterError
from rcdetect.evaluation import (
    CrossvalReport,
    EvalRow,
    crossval_report,
    holdout_experiment,
    slot_dataset,
    stratified_split,
    write_crossval_csv,
    write_report_csv,
    write_report_text,
    write_sweep_csv,
)
from rcdetect.metrics import ConfusionMatrix, evaluate_counts
from rcdetect.traffic import Protocol


def test_crossval_separable_is_perfect():
    X = np.r_[np.zeros(20), np.ones(20)][:, None] + np.linspace(0, 0.1, 40)[:, None]
    y = np.r_[np.zeros(20), np.ones(20)].astype(int)
    rep = crossval_report(X, y, ModelSpec("dt"), 5, seed=0)
    assert rep.fold_accuracies == (1,) * 5 and rep.mean == 1 and rep.spread == 0


def test_leave_one_out():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    rep = crossval_report(X, y, ModelSpec("dt"), 4, seed=1)
    assert len(rep.fold_accuracies) == 4 and set(rep.fold_accuracies) <= {0, 1}


def test_crossval_deterministic():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 2))
    y = (X[:, 0] > 0).astype(int)
    spec = ModelSpec("rf", {"n_trees": 5})
    assert crossval_report(X, y, spec, 5, 3) == crossval_report(X, y, spec, 5, 3)


def test_stratified_split():
    y = np.array([0] * 70 + [1] * 30)
    train, test = stratified_split(y, 0.3, seed=2)
    assert len(test) == 30 and (y[test] == 1).sum() == 9
    assert sorted(np.r_[train, test].tolist()) == list(range(100))
    with pytest.raises(ParameterError):
        stratified_split(y, 1.0)


def test_slot_dataset(dataset):
    tcp = slot_dataset(dataset, "TCP")
    assert {f.protocol for f in tcp.features} == {Protocol.TCP}
    assert len(slot_dataset(dataset, "GENERAL")) == len(dataset)
    with pytest.raises(ParameterError):
        slot_dataset(dataset, "ICMP")


def test_holdout_rows_and_fp_rate(dataset):
    res = holdout_experiment(dataset, [ModelSpec("nb")], ["UDP"], 0.3, seed=1, by_device=True)
    overall = res.row("nb", "UDP")
    per_device = [r for r in res.rows if r.device != "ALL"]
    assert len(per_device) == 5
    total = sum((r.report.confusion for r in per_device), ConfusionMatrix(0, 0, 0, 0))
    assert total == overall.report.confusion
    _, test = res.splits["UDP"]
    assert overall.report.fp_per_second == Fraction(overall.report.confusion.fp, 2 * len(test))


def _rows():
    r1 = evaluate_counts(ConfusionMatrix(45, 50, 2, 3), 10)
    r2 = evaluate_counts(ConfusionMatrix(0, 10, 0, 0), 4)
    return [EvalRow("rf", "TCP", r1), EvalRow("svm", "UDP", r2), EvalRow("rf", "TCP", r1, "dev0")]


def test_text_report_columns():
    buf = io.StringIO()
    write_report_text(_rows(), buf, ["rcdetect evaluate cfg=abc seed=1"], paper_literal=True)
    text = buf.getvalue()
    assert text.startswith("# rcdetect evaluate cfg=abc seed=1\n# literal-formula")
    for col in ("ACC", "TPR", "FPR", "FDR", "PoD", "PoMD", "PoFA", "FP/s", "PoFA_lit", "PoMD_lit"):
        assert col in text
    assert "0.9500" in text and "UNDEFINED" in text and "0.0385" in text


def test_csv_report_rows():
    buf = io.StringIO()
    write_report_csv(_rows(), buf, ["hdr"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# hdr"
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 3
    assert rows[0]["acc"] == "0.9500" and rows[0]["fp_per_second"] == "0.2000"
    assert rows[1]["tpr"] == "UNDEFINED" and "p_fa_literal" not in rows[0]


def test_crossval_and_sweep_csv():
    buf = io.StringIO()
    write_crossval_csv([CrossvalReport("TCP", "rf", 2, 0, (Fraction(1), Fraction(1, 2)))], buf, ["h"])
    assert buf.getvalue().splitlines()[-1] == "rf,TCP,2,mean,0.7500"
    buf = io.StringIO()
    write_sweep_csv([(0.5, Fraction(1, 4), Fraction(1))], buf)
    assert buf.getvalue().splitlines() == ["threshold,fpr,detection_rate", "0.5,0.2500,1.0000"]
