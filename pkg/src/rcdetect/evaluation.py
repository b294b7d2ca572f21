"""Experiment harness: holdout and k-fold runs, plus text/CSV report writers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .classifiers import ModelSpec, TrainedModel, fold_accuracies, train_model
from .errors import ParameterError
from .features import LabeledDataset
from .metrics import EvalReport, confusion, evaluate_counts, format_metric
from .traffic import Protocol

DETECTION_COLUMNS = (("ACC", "acc"), ("TPR", "tpr"), ("FPR", "fpr"), ("FDR", "fdr"))
PROBABILITY_COLUMNS = (("ACC", "acc"), ("PoD", "p_d"), ("PoMD", "p_md"), ("PoFA", "p_fa"), ("FP/s", "fp_per_second"))
LITERAL_COLUMNS = (("PoFA_lit", "p_fa_literal"), ("PoMD_lit", "p_md_literal"))
CSV_METRICS = ("acc", "tpr", "fpr", "fdr", "precision", "recall", "f1", "p_d", "p_fa", "p_md", "fp_per_second")
LITERAL_NOTE = ("literal-formula columns: PoFA_lit = FP/(TN+FN), PoMD_lit = FN/(TN+FP); "
                "the undefined T_F symbol is read as TN")
SLOT_PROTOCOLS = {"TCP": (Protocol.TCP,), "UDP": (Protocol.UDP,), "GENERAL": (Protocol.TCP, Protocol.UDP)}


@dataclass(frozen=True)
class CrossvalReport:
    protocol: str
    kind: str
    k: int
    seed: int
    fold_accuracies: tuple

    @property
    def mean(self) -> Fraction:
        return sum(self.fold_accuracies, Fraction(0)) / len(self.fold_accuracies)

    @property
    def spread(self) -> Fraction:
        return max(self.fold_accuracies) - min(self.fold_accuracies)


@dataclass(frozen=True)
class EvalRow:
    algorithm: str
    protocol: str
    report: EvalReport
    device: str = "ALL"
    fold: str = "holdout"


@dataclass
class HoldoutResult:
    rows: list
    models: dict = field(default_factory=dict)
    splits: dict = field(default_factory=dict)

    def row(self, algorithm: str, protocol: str, device: str = "ALL") -> EvalRow:
        for r in self.rows:
            if (r.algorithm, r.protocol, r.device) == (algorithm, protocol, device):
                return r
        raise KeyError((algorithm, protocol, device))


def crossval_report(X, y, spec: ModelSpec, k: int = 5, seed: int = 0, protocol: str = "GENERAL") -> CrossvalReport:
    accs = fold_accuracies(spec, X, y, k, seed, protocol)
    return CrossvalReport(protocol, spec.kind, k, seed, tuple(accs))


def stratified_split(y, test_fraction: float = 0.3, seed: int = 0):
    """Seeded per-class split; returns sorted ``(train_idx, test_idx)``."""
    if not 0 < test_fraction < 1:
        raise ParameterError(f"test fraction must be in (0, 1), got {test_fraction}")
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B17]))
    train, test = [], []
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        n_test = int(round(test_fraction * len(idx)))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def slot_dataset(data: LabeledDataset, slot: str) -> LabeledDataset:
    if slot not in SLOT_PROTOCOLS:
        raise ParameterError(f"protocol slot must be one of {tuple(SLOT_PROTOCOLS)}, got {slot!r}")
    if slot == "GENERAL":
        return data
    return data.for_protocol(Protocol[slot])


def window_seconds(data: LabeledDataset) -> Fraction:
    """Monitored time covered by a set of windows, counting each (device, window) once."""
    spans = {(f.window.device_id, f.window.start): f.window.duration for f in data.features}
    return Fraction(sum(spans.values()), 1_000_000)


def evaluate_model(model: TrainedModel, data: LabeledDataset, algorithm: Optional[str] = None,
                   by_device: bool = False, fold: str = "holdout") -> list:
    """Score ``model`` on ``data``; one overall row plus optional per-device rows."""
    algorithm = algorithm or model.kind
    pred = model.predict_features(data.features)
    y = data.y
    rows = [EvalRow(algorithm, model.protocol,
                    evaluate_counts(confusion(pred, y), window_seconds(data)), "ALL", fold)]
    if by_device:
        devices = np.array([f.window.device_id for f in data.features])
        for dev in sorted(set(devices)):
            mask = devices == dev
            sub = data.subset(np.flatnonzero(mask))
            rows.append(EvalRow(algorithm, model.protocol,
                                evaluate_counts(confusion(pred[mask], y[mask]), window_seconds(sub)), dev, fold))
    return rows


def holdout_experiment(data: LabeledDataset, specs: Sequence[ModelSpec], slots: Sequence[str] = ("TCP", "UDP"),
                       test_fraction: float = 0.3, seed: int = 0, by_device: bool = False) -> HoldoutResult:
    """Train every spec on each protocol slot's training split and score the held-out split."""
    result = HoldoutResult(rows=[])
    for slot in slots:
        sub = slot_dataset(data, slot)
        train_idx, test_idx = stratified_split(sub.y, test_fraction, seed)
        result.splits[slot] = (train_idx, test_idx)
        train, test = sub.subset(train_idx), sub.subset(test_idx)
        for spec in specs:
            model = train_model(spec, train.matrix(one_hot=slot == "GENERAL"), train.y, protocol=slot, seed=seed)
            result.models[(spec.kind, slot)] = model
            result.rows.extend(evaluate_model(model, test, spec.kind, by_device))
    return result


# ---------------------------------------------------------------------------
# report writers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "n/a"
    return format_metric(value)


def _write_header(fh, header_lines: Sequence[str]) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")


def _text_table(fh, title: str, columns, rows, paper_literal: bool) -> None:
    cols = list(columns) + (list(LITERAL_COLUMNS) if paper_literal else [])
    fh.write(f"{title}\n")
    head = ["algorithm", "protocol", "device"] + [c for c, _ in cols]
    body = [[r.algorithm, r.protocol, r.device] + [_fmt(getattr(r.report, attr)) for _, attr in cols] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    for line in [head] + body:
        fh.write("  ".join(x.ljust(w) for x, w in zip(line, widths)).rstrip() + "\n")
    fh.write("\n")


def write_report_text(rows: Sequence[EvalRow], fh, header_lines: Sequence[str] = (),
                      paper_literal: bool = False) -> None:
    """Two aligned tables: ACC/TPR/FPR/FDR per model, then ACC/PoD/PoMD/PoFA/FP-per-second per device."""
    _write_header(fh, list(header_lines) + ([LITERAL_NOTE] if paper_literal else []))
    overall = [r for r in rows if r.device == "ALL"]
    _text_table(fh, "detection performance (per algorithm x protocol)", DETECTION_COLUMNS, overall, False)
    _text_table(fh, "probability metrics (per algorithm x protocol x device)", PROBABILITY_COLUMNS, rows, paper_literal)
    fh.write("confusion counts\n")
    for r in rows:
        m = r.report.confusion
        fh.write(f"{r.algorithm} {r.protocol} {r.device} {r.fold}: tp={m.tp} tn={m.tn} fp={m.fp} fn={m.fn}\n")


def write_report_csv(rows: Sequence[EvalRow], fh, header_lines: Sequence[str] = (),
                     paper_literal: bool = False) -> None:
    """One row per model x protocol x device x fold."""
    _write_header(fh, list(header_lines) + ([LITERAL_NOTE] if paper_literal else []))
    extra = ("p_fa_literal", "p_md_literal") if paper_literal else ()
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("algorithm", "protocol", "device", "fold", "n", "tp", "tn", "fp", "fn") + CSV_METRICS + extra)
    for r in rows:
        m = r.report.confusion
        writer.writerow([r.algorithm, r.protocol, r.device, r.fold, m.n, m.tp, m.tn, m.fp, m.fn]
                        + [_fmt(getattr(r.report, a)) for a in CSV_METRICS + extra])


def write_crossval_csv(reports: Sequence[CrossvalReport], fh, header_lines: Sequence[str] = ()) -> None:
    _write_header(fh, header_lines)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("algorithm", "protocol", "k", "fold", "accuracy"))
    for rep in reports:
        for i, acc in enumerate(rep.fold_accuracies):
            writer.writerow((rep.kind, rep.protocol, rep.k, i, format_metric(acc)))
        writer.writerow((rep.kind, rep.protocol, rep.k, "mean", format_metric(rep.mean)))


def write_sweep_csv(points: Sequence, fh, header_lines: Sequence[str] = ()) -> None:
    _write_header(fh, header_lines)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("threshold", "fpr", "detection_rate"))
    for t, fpr, dr in points:
        writer.writerow((repr(float(t)), format_metric(fpr), format_metric(dr)))
