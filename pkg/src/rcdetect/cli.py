"""Command-line front end: generate, train, detect, attribute, evaluate, crossval, sweep.

Every command is a deterministic function of its inputs and the effective
configuration. Outputs carry a ``# rcdetect <command> cfg=<hash> seed=<seed>``
header row (JSON outputs carry the same values under ``meta``), and each run
writes ``effective_config.<command>.json`` next to its outputs.

Exit codes: 0 ok, 1 usage/parameter/config, 2 io, 3 schema/format/shape,
4 training, 5 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .attribution import attribute_windows, build_baselines, read_telemetry
from .classifiers import KINDS, ModelSpec, load_model, save_model, select_best_model, sweep_tree_count, train_model
from .errors import ConfigurationError, ParameterError, RcdetectError
from .evaluation import (
    crossval_report,
    evaluate_model,
    holdout_experiment,
    slot_dataset,
    stratified_split,
    write_crossval_csv,
    write_report_csv,
    write_report_text,
    write_sweep_csv,
)
from .features import FEATURIZED, LabeledDataset, featurize
from .ingest import clean_dataset, label_features, read_attack_intervals, read_csv, read_pcap
from .metrics import format_metric, threshold_sweep
from .synthgen import ScenarioConfig, build_corpus, read_devices, write_corpus
from .traffic import SUPPORTED_WINDOW_SECONDS, Label, TimeWindow, seconds_to_us

COMMANDS = ("generate", "train", "detect", "attribute", "evaluate", "crossval", "sweep")
PROTOCOL_CHOICES = ("tcp", "udp", "general")
CLASSIFIER_CHOICES = KINDS + ("auto",)
PATH_FIELDS = ("input", "telemetry", "attacks", "devices", "model", "out_dir")
REPORT_FORMATS = ("text", "csv", "both")


class UsageError(ParameterError):
    pass


@dataclass
class RunConfig:
    input: Optional[str] = None
    telemetry: Optional[str] = None
    attacks: Optional[str] = None
    devices: Optional[str] = None
    model: Optional[str] = None
    out_dir: str = "."
    window_secs: int = 2
    protocol: str = "general"
    classifier: str = "rf"
    params: dict = field(default_factory=dict)
    thresholds: tuple = (3.0, 3.0)
    confidence: float = 0.8
    min_baseline: int = 30
    seed: int = 0
    report_format: str = "both"
    paper_literal: bool = False
    test_fraction: float = 0.3
    folds: int = 5
    tree_candidates: tuple = ()
    n_thresholds: int = 20
    selection_criterion: str = "accuracy"
    evaluate_protocols: tuple = PROTOCOL_CHOICES
    evaluate_classifiers: tuple = KINDS
    csv_schema: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thresholds = tuple(float(t) for t in self.thresholds)
        self.tree_candidates = tuple(int(n) for n in self.tree_candidates)
        self.evaluate_protocols = tuple(self.evaluate_protocols)
        self.evaluate_classifiers = tuple(self.evaluate_classifiers)
        if self.window_secs not in SUPPORTED_WINDOW_SECONDS:
            raise ConfigurationError(f"window_secs must be one of {SUPPORTED_WINDOW_SECONDS}, got {self.window_secs}")
        for p in (self.protocol,) + self.evaluate_protocols:
            if p not in PROTOCOL_CHOICES:
                raise ConfigurationError(f"protocol must be one of {PROTOCOL_CHOICES}, got {p!r}")
        for c in (self.classifier,) + self.evaluate_classifiers:
            if c not in CLASSIFIER_CHOICES:
                raise ConfigurationError(f"classifier must be one of {CLASSIFIER_CHOICES}, got {c!r}")
        if self.report_format not in REPORT_FORMATS:
            raise ConfigurationError(f"report_format must be one of {REPORT_FORMATS}")
        if len(self.thresholds) != 2:
            raise ConfigurationError("thresholds must be a pair (energy, memory)")
        if self.n_thresholds < 2:
            raise ConfigurationError("n_thresholds must be at least 2")
        unknown = set(self.params) - set(KINDS)
        if unknown:
            raise ConfigurationError(f"params has unknown classifier keys: {sorted(unknown)}")

    @property
    def slot(self) -> str:
        return self.protocol.upper()

    def spec(self, kind: Optional[str] = None) -> ModelSpec:
        kind = kind or self.classifier
        return ModelSpec(kind, dict(self.params.get(kind, {})))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("thresholds", "tree_candidates", "evaluate_protocols", "evaluate_classifiers"):
            d[k] = list(d[k])
        return d

    def cfg_hash(self) -> str:
        """Hash of every non-path setting, so relocated inputs keep the same hash."""
        d = {k: v for k, v in self.to_dict().items() if k not in PATH_FIELDS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def header(self, command: str) -> str:
        return f"rcdetect {command} cfg={self.cfg_hash()} seed={self.seed}"


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return doc


def _resolve(path: Optional[str], base: str) -> Optional[str]:
    if path is None:
        return None
    return os.path.normpath(os.path.join(base, path))


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    doc = load_config(args.config)
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else os.getcwd()
    for key in PATH_FIELDS:
        if doc.get(key) is not None:
            doc[key] = _resolve(doc[key], base)
    flags = {
        "seed": args.seed, "window_secs": args.window_secs, "protocol": args.protocol,
        "classifier": args.classifier, "input": args.input, "telemetry": args.telemetry,
        "attacks": args.attacks, "devices": args.devices, "model": args.model, "out_dir": args.out,
        "report_format": args.format,
    }
    for key, value in flags.items():
        if value is not None:
            doc[key] = _resolve(value, os.getcwd()) if key in PATH_FIELDS else value
    if args.paper_literal:
        doc["paper_literal"] = True
    if args.protocol is not None:
        doc["evaluate_protocols"] = [args.protocol]
    if args.classifier is not None and args.classifier != "auto":
        doc["evaluate_classifiers"] = [args.classifier]
    doc.setdefault("out_dir", os.getcwd())
    try:
        cfg = RunConfig(**doc)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    _default_siblings(cfg)
    return cfg


def _default_siblings(cfg: RunConfig) -> None:
    # a generated corpus keeps devices/attacks/telemetry next to the capture
    if cfg.input is None:
        return
    folder = os.path.dirname(cfg.input)
    for attr, name in (("devices", "devices.csv"), ("attacks", "attacks.csv"), ("telemetry", "telemetry.csv")):
        candidate = os.path.join(folder, name)
        if getattr(cfg, attr) is None and os.path.exists(candidate):
            setattr(cfg, attr, candidate)


# ---------------------------------------------------------------------------
# pipeline pieces
# ---------------------------------------------------------------------------

def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


def load_packets(cfg: RunConfig) -> list:
    _require(cfg, "input")
    if cfg.input.lower().endswith((".pcap", ".cap")):
        raw = read_pcap(cfg.input)
    else:
        raw = read_csv(cfg.input, cfg.csv_schema or None)
    return list(clean_dataset(raw).rows)


def load_features(cfg: RunConfig) -> list:
    _require(cfg, "input", "devices")
    return featurize(load_packets(cfg), read_devices(cfg.devices), seconds_to_us(cfg.window_secs))


def load_dataset(cfg: RunConfig) -> LabeledDataset:
    _require(cfg, "attacks")
    feats = load_features(cfg)
    return LabeledDataset(tuple(feats), tuple(label_features(feats, read_attack_intervals(cfg.attacks))))


def _slot_features(features, slot: str) -> list:
    if slot == "GENERAL":
        return [f for f in features if f.protocol in FEATURIZED]
    return [f for f in features if f.protocol.value == slot]


def _open_out(cfg: RunConfig, name: str, mode: str = "w"):
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, name)
    if "b" in mode:
        return path, open(path, mode)
    return path, open(path, mode, encoding="utf-8", newline="")


def write_snapshot(cfg: RunConfig, command: str) -> str:
    path, fh = _open_out(cfg, f"effective_config.{command}.json")
    with fh:
        json.dump({"command": command, "cfg_hash": cfg.cfg_hash(), "version": __version__, **cfg.to_dict()},
                  fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


def _write_reports(cfg: RunConfig, stem: str, rows, command: str, extra_header=()) -> list:
    header = [cfg.header(command)] + list(extra_header)
    paths = []
    if cfg.report_format in ("text", "both"):
        path, fh = _open_out(cfg, f"{stem}.txt")
        with fh:
            write_report_text(rows, fh, header, cfg.paper_literal)
        paths.append(path)
    if cfg.report_format in ("csv", "both"):
        path, fh = _open_out(cfg, f"{stem}.csv")
        with fh:
            write_report_csv(rows, fh, header, cfg.paper_literal)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> list:
    scenario = ScenarioConfig(**{**cfg.scenario, "seed": cfg.seed, "window_s": cfg.window_secs})
    corpus = build_corpus(scenario)
    paths = write_corpus(corpus, cfg.out_dir, cfg.header("generate"))
    return sorted(paths.values())


def cmd_train(cfg: RunConfig) -> list:
    data = slot_dataset(load_dataset(cfg), cfg.slot)
    if len(data) == 0:
        raise ParameterError(f"no {cfg.slot} feature vectors in the input")
    one_hot = cfg.slot == "GENERAL"
    X, y = data.matrix(one_hot), data.y
    header = []
    kind = cfg.classifier
    if kind == "auto":
        train_idx, val_idx = stratified_split(y, cfg.test_fraction, cfg.seed)
        candidates = [train_model(cfg.spec(k), X[train_idx], y[train_idx], cfg.slot, cfg.seed) for k in KINDS]
        best, scores = select_best_model(candidates, X[val_idx], y[val_idx], cfg.selection_criterion)
        kind = best.kind
        header.append("selection " + " ".join(f"{k}={format_metric(s)}" for k, s in zip(KINDS, scores))
                      + f" chosen={kind}")
    model = train_model(cfg.spec(kind), X, y, cfg.slot, cfg.seed)
    model_path = cfg.model or os.path.join(cfg.out_dir, "model.json")
    os.makedirs(os.path.dirname(model_path) or ".", exist_ok=True)
    save_model(model, model_path, meta={"cfg_hash": cfg.cfg_hash(), "seed": cfg.seed})
    rows = evaluate_model(model, data, kind, by_device=True, fold="train")
    return [model_path] + _write_reports(cfg, "train_report", rows, "train", header)


def _detect(cfg: RunConfig):
    _require(cfg, "model")
    model = load_model(cfg.model)
    feats = _slot_features(load_features(cfg), model.protocol)
    if not feats:
        return model, feats, np.zeros(0, dtype=np.int64), np.zeros(0)
    X = model.matrix(feats)
    return model, feats, model.predict(X), model.decision_scores(X)


def cmd_detect(cfg: RunConfig) -> list:
    model, feats, pred, scores = _detect(cfg)
    path, fh = _open_out(cfg, "verdicts.csv")
    with fh:
        fh.write(f"# {cfg.header('detect')} model={model.kind}/{model.protocol}\n")
        fh.write("device_id,window_start_us,window_end_us,protocol,verdict,score\n")
        for f, p, s in zip(feats, pred, scores):
            fh.write(f"{f.window.device_id},{f.window.start},{f.window.end},{f.protocol.value},"
                     f"{Label(int(p)).name},{float(s)!r}\n")
    return [path]


def cmd_attribute(cfg: RunConfig) -> list:
    _require(cfg, "telemetry")
    _, feats, pred, _ = _detect(cfg)
    flagged = {}
    for f, p in zip(feats, pred):
        if p == Label.ATTACKED:
            flagged.setdefault((f.window.device_id, f.window.start), f)
    windows = [TimeWindow(dev, start, seconds_to_us(cfg.window_secs)) for dev, start in sorted(flagged)]
    with open(cfg.telemetry, encoding="utf-8", newline="") as fh:
        samples = read_telemetry(fh)
    profiles = build_baselines(samples, cfg.min_baseline)
    results = attribute_windows(windows, profiles, samples, cfg.thresholds, confidence=cfg.confidence)
    path, fh = _open_out(cfg, "attribution.csv")
    with fh:
        fh.write(f"# {cfg.header('attribute')} thresholds={cfg.thresholds[0]!r},{cfg.thresholds[1]!r}\n")
        fh.write("device_id,window_start_us,window_end_us,verdict,energy_z,memory_z,missing_telemetry\n")
        for r in results:
            fh.write(f"{r.window.device_id},{r.window.start},{r.window.end},{r.verdict.name},"
                     f"{r.energy_z!r},{r.memory_z!r},{int(r.missing_telemetry)}\n")
    return [path]


def cmd_evaluate(cfg: RunConfig) -> list:
    data = load_dataset(cfg)
    kinds = [k for k in cfg.evaluate_classifiers if k != "auto"] or list(KINDS)
    specs = [cfg.spec(k) for k in kinds]
    slots = [p.upper() for p in cfg.evaluate_protocols]
    result = holdout_experiment(data, specs, slots, cfg.test_fraction, cfg.seed, by_device=True)
    note = f"holdout test_fraction={cfg.test_fraction!r} window_secs={cfg.window_secs}"
    return _write_reports(cfg, "report", result.rows, "evaluate", [note])


def cmd_crossval(cfg: RunConfig) -> list:
    data = slot_dataset(load_dataset(cfg), cfg.slot)
    X, y = data.matrix(cfg.slot == "GENERAL"), data.y
    kind = "rf" if cfg.classifier == "auto" else cfg.classifier
    report = crossval_report(X, y, cfg.spec(kind), cfg.folds, cfg.seed, cfg.slot)
    path, fh = _open_out(cfg, "crossval.csv")
    with fh:
        write_crossval_csv([report], fh, [cfg.header("crossval")])
    paths = [path]
    if cfg.tree_candidates:
        chosen, means = sweep_tree_count(X, y, cfg.folds, cfg.tree_candidates, cfg.seed,
                                         cfg.params.get("rf"), cfg.slot)
        path, fh = _open_out(cfg, "tree_sweep.csv")
        with fh:
            fh.write(f"# {cfg.header('crossval')} chosen={chosen}\n")
            fh.write("n_trees,mean_accuracy\n")
            for n, m in means.items():
                fh.write(f"{n},{format_metric(m)}\n")
        paths.append(path)
    return paths


def sweep_thresholds(scores, n: int) -> list:
    """``n`` evenly spaced thresholds from just below the lowest score to the highest."""
    lo, hi = float(np.min(scores)), float(np.max(scores))
    pad = 1e-6 * max(1.0, hi - lo)
    return [float(t) for t in np.linspace(lo - pad, hi, n)]


def cmd_sweep(cfg: RunConfig) -> list:
    data = slot_dataset(load_dataset(cfg), cfg.slot)
    X, y = data.matrix(cfg.slot == "GENERAL"), data.y
    kind = "svm" if cfg.classifier == "auto" else cfg.classifier
    train_idx, test_idx = stratified_split(y, cfg.test_fraction, cfg.seed)
    model = train_model(cfg.spec(kind), X[train_idx], y[train_idx], cfg.slot, cfg.seed)
    scores = model.decision_scores(X[test_idx])
    points = threshold_sweep(scores, y[test_idx], sweep_thresholds(scores, cfg.n_thresholds))
    path, fh = _open_out(cfg, "sweep.csv")
    with fh:
        write_sweep_csv(points, fh, [f"{cfg.header('sweep')} model={kind}/{cfg.slot}"])
    return [path]


HANDLERS = {
    "generate": cmd_generate, "train": cmd_train, "detect": cmd_detect, "attribute": cmd_attribute,
    "evaluate": cmd_evaluate, "crossval": cmd_crossval, "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# argument parsing and exit codes
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--window-secs", type=int, choices=SUPPORTED_WINDOW_SECONDS)
    p.add_argument("--protocol", choices=PROTOCOL_CHOICES)
    p.add_argument("--classifier", choices=CLASSIFIER_CHOICES)
    p.add_argument("--paper-literal", action="store_true", help="add the literal PoFA/PoMD formulas to reports")
    p.add_argument("--input", help="pcap or packet CSV")
    p.add_argument("--telemetry", help="telemetry CSV")
    p.add_argument("--attacks", help="attack interval CSV (ground truth)")
    p.add_argument("--devices", help="device_id,ip CSV")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=REPORT_FORMATS, help="report format")
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = _Parser(prog="rcdetect", description="Resource-constraint attack detection pipeline.")
    parser.add_argument("--version", action="version", version=f"rcdetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "generate": "write a synthetic corpus (pcap, CSVs, telemetry, labels)",
        "train": "train a detection model and write a training report",
        "detect": "stage 1: per-window NORMAL/ATTACKED verdicts",
        "attribute": "stage 2: energy/memory attribution of flagged windows",
        "evaluate": "holdout evaluation per algorithm x protocol x device",
        "crossval": "k-fold accuracies (and optional tree-count sweep)",
        "sweep": "false-positive rate vs detection rate over thresholds",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[parent], help=helps[name])
    return parser


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split())
    print(f"rcdetect: error exit={code} type={type(exc).__name__} msg={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = build_run_config(args)
        paths = HANDLERS[args.command](cfg)
        paths.append(write_snapshot(cfg, args.command))
    except RcdetectError as exc:
        return _fail(exc.exit_code, exc)
    except OSError as exc:
        return _fail(2, exc)
    except Exception as exc:  # noqa: BLE001
        return _fail(5, exc)
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
