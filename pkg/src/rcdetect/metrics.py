"""Confusion counts and every derived detection metric, in exact rationals."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInputError, ParameterError, ShapeError
from .traffic import Label


class _Undefined:
    """Marker for a metric whose denominator is zero."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()


def is_defined(value) -> bool:
    return value is not UNDEFINED


def ratio(num: int, den: int):
    return Fraction(num, den) if den else UNDEFINED


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def confusion(predictions: Sequence, truths: Sequence) -> ConfusionMatrix:
    """Tally (prediction, truth) pairs; ATTACKED is the positive class."""
    pred = np.asarray([int(p) for p in predictions], dtype=np.int64)
    true = np.asarray([int(t) for t in truths], dtype=np.int64)
    if pred.shape != true.shape:
        raise ShapeError(f"{len(pred)} predictions but {len(true)} truths")
    if pred.size == 0:
        raise EmptyInputError("confusion matrix needs at least one prediction")
    if not (np.isin(pred, (0, 1)).all() and np.isin(true, (0, 1)).all()):
        raise ParameterError("labels must be NORMAL (0) or ATTACKED (1)")
    a = int(Label.ATTACKED)
    return ConfusionMatrix(
        tp=int(np.sum((pred == a) & (true == a))),
        tn=int(np.sum((pred != a) & (true != a))),
        fp=int(np.sum((pred == a) & (true != a))),
        fn=int(np.sum((pred != a) & (true == a))),
    )


def accuracy(m: ConfusionMatrix):
    return ratio(m.tp + m.tn, m.n)


def core_metrics(m: ConfusionMatrix):
    """``(acc, fpr, tpr, fdr)``; fdr = (fp + fn) / n."""
    return accuracy(m), ratio(m.fp, m.fp + m.tn), ratio(m.tp, m.tp + m.fn), ratio(m.fp + m.fn, m.n)


def probability_metrics(m: ConfusionMatrix):
    """``(p_d, p_fa, p_md, acc)`` with the standard denominators.

    p_fa = fp/(fp+tn) and p_md = fn/(tp+fn), so p_d + p_md = 1.
    """
    return ratio(m.tp, m.tp + m.fn), ratio(m.fp, m.fp + m.tn), ratio(m.fn, m.tp + m.fn), accuracy(m)


def probability_metrics_literal(m: ConfusionMatrix):
    """``(p_fa, p_md)`` with the alternative literal denominators.

    p_fa = fp/(tn+fn) and p_md = fn/(tn+fp). These are not complementary to
    p_d and exist only for side-by-side reporting.
    """
    return ratio(m.fp, m.tn + m.fn), ratio(m.fn, m.tn + m.fp)


def prf1(m: ConfusionMatrix):
    precision = ratio(m.tp, m.tp + m.fp)
    recall = ratio(m.tp, m.tp + m.fn)
    if not (is_defined(precision) and is_defined(recall)) or precision + recall == 0:
        return precision, recall, UNDEFINED
    return precision, recall, 2 * precision * recall / (precision + recall)


def fp_rate_per_second(m: ConfusionMatrix, duration_s) -> Fraction:
    duration = Fraction(duration_s)
    if duration <= 0:
        raise ParameterError(f"duration must be positive, got {duration_s}")
    return Fraction(m.fp) / duration


def format_metric(value, places: int = 4) -> str:
    """Decimal text rounded half-even; ``UNDEFINED`` passes through."""
    if not is_defined(value):
        return "UNDEFINED"
    frac = Fraction(value)
    with localcontext() as ctx:
        ctx.prec = 50
        d = Decimal(frac.numerator) / Decimal(frac.denominator)
        return str(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    acc: object
    tpr: object
    fpr: object
    fdr: object
    precision: object
    recall: object
    f1: object
    p_d: object
    p_fa: object
    p_md: object
    fp_per_second: Optional[Fraction] = None
    p_fa_literal: object = UNDEFINED
    p_md_literal: object = UNDEFINED
    fold_accuracies: tuple = ()
    sweep: tuple = ()

    def get(self, name: str):
        aliases = {"accuracy": "acc", "pod": "p_d", "PoD": "p_d", "F1": "f1"}
        return getattr(self, aliases.get(name, name))


def evaluate_counts(m: ConfusionMatrix, duration_s=None) -> EvalReport:
    acc, fpr, tpr, fdr = core_metrics(m)
    p_d, p_fa, p_md, _ = probability_metrics(m)
    precision, recall, f1 = prf1(m)
    lit_fa, lit_md = probability_metrics_literal(m)
    return EvalReport(
        confusion=m, acc=acc, tpr=tpr, fpr=fpr, fdr=fdr, precision=precision, recall=recall, f1=f1,
        p_d=p_d, p_fa=p_fa, p_md=p_md,
        fp_per_second=None if duration_s is None else fp_rate_per_second(m, duration_s),
        p_fa_literal=lit_fa, p_md_literal=lit_md,
    )


def evaluate_predictions(predictions, truths, duration_s=None) -> EvalReport:
    return evaluate_counts(confusion(predictions, truths), duration_s)


def threshold_sweep(scores, truths, thresholds) -> list:
    """``[(threshold, fpr, detection_rate), ...]`` predicting ATTACKED iff score > threshold."""
    scores = np.asarray(scores, dtype=float)
    truths = np.asarray([int(t) for t in truths], dtype=np.int64)
    thresholds = list(thresholds)
    if not thresholds:
        raise ParameterError("threshold sweep needs at least one threshold")
    if scores.shape != truths.shape:
        raise ShapeError(f"{len(scores)} scores but {len(truths)} truths")
    if not np.all(np.isfinite(scores)):
        raise ParameterError("scores must be finite")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ParameterError("thresholds must be sorted ascending")
    out = []
    for t in thresholds:
        m = confusion((scores > t).astype(np.int64), truths)
        _, fpr, tpr, _ = core_metrics(m)
        out.append((t, fpr, tpr))
    return out
