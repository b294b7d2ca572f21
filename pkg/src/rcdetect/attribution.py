"""Stage-2 attribution of attacked windows from energy and memory telemetry."""

from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import InsufficientBaselineError, MissingTelemetryError, ParameterError, SchemaError
from .features import WindowFeatures
from .traffic import TimeWindow

STD_FLOOR = 1e-6
DEFAULT_MIN_BASELINE = 30
DEFAULT_THRESHOLDS = (3.0, 3.0)
DEFAULT_CONFIDENCE = 0.8
TELEMETRY_COLUMNS = ("timestamp_us", "device_id", "energy_mw", "memory_kib", "state")


class DeviceState(str, enum.Enum):
    IDLE = "IDLE"
    NORMAL = "NORMAL"
    ABNORMAL = "ABNORMAL"
    UNKNOWN = "UNKNOWN"


class Verdict(enum.IntEnum):
    # class indices for pattern models; ties in votes go to the highest index
    OTHER = 0
    MEMORY_ATTACK = 1
    ENERGY_ATTACK = 2
    BOTH = 3


VERDICT_CLASSES = tuple(v.name for v in Verdict)


@dataclass(frozen=True, slots=True)
class TelemetrySample:
    timestamp: int
    device_id: str
    energy_mw: float
    memory_kib: float
    state: DeviceState = DeviceState.UNKNOWN


@dataclass(frozen=True)
class BaselineProfile:
    device_id: str
    energy_mean: float
    energy_std: float
    memory_mean: float
    memory_std: float
    count: int


@dataclass(frozen=True)
class AttributionResult:
    window: TimeWindow
    verdict: Verdict
    energy_z: float
    memory_z: float
    pattern_label: Optional[Verdict] = None
    pattern_score: Optional[float] = None
    missing_telemetry: bool = False


def build_baseline(samples: Iterable[TelemetrySample], device_id: str,
                   min_count: int = DEFAULT_MIN_BASELINE) -> BaselineProfile:
    """Population mean/stddev of energy and memory over the device's NORMAL samples.

    Samples in any other state are ignored, so attack-period readings cannot
    leak into the baseline.
    """
    rows = [s for s in samples if s.device_id == device_id and s.state is DeviceState.NORMAL]
    if len(rows) < min_count:
        raise InsufficientBaselineError(device_id, min_count, len(rows))
    energy = np.array([s.energy_mw for s in rows], dtype=float)
    memory = np.array([s.memory_kib for s in rows], dtype=float)
    return BaselineProfile(
        device_id=device_id,
        energy_mean=float(energy.mean()),
        energy_std=max(float(energy.std()), STD_FLOOR),
        memory_mean=float(memory.mean()),
        memory_std=max(float(memory.std()), STD_FLOOR),
        count=len(rows),
    )


class TelemetryIndex:
    """Per-device, time-sorted telemetry for fast window lookups."""

    def __init__(self, samples: Iterable[TelemetrySample]):
        self._by_device: dict = {}
        for s in samples:
            self._by_device.setdefault(s.device_id, []).append(s)
        self._times = {}
        for device, rows in self._by_device.items():
            rows.sort(key=lambda s: s.timestamp)
            self._times[device] = [s.timestamp for s in rows]

    def devices(self):
        return sorted(self._by_device)

    def samples(self, device_id: str) -> list:
        return self._by_device.get(device_id, [])

    def in_window(self, window: TimeWindow) -> list:
        times = self._times.get(window.device_id, [])
        lo = bisect.bisect_left(times, window.start)
        hi = bisect.bisect_left(times, window.end)
        return self._by_device[window.device_id][lo:hi] if hi > lo else []


def _in_window(window: TimeWindow, samples) -> list:
    if isinstance(samples, TelemetryIndex):
        return samples.in_window(window)
    return [s for s in samples if s.device_id == window.device_id and window.contains(s.timestamp)]


def deviation_scores(profile: BaselineProfile, window: TimeWindow, samples):
    """``(energy_z, memory_z)`` of the in-window means against the baseline."""
    rows = _in_window(window, samples)
    if not rows:
        raise MissingTelemetryError(
            f"no telemetry for device {window.device_id} in [{window.start}, {window.end})"
        )
    energy = math.fsum(s.energy_mw for s in rows) / len(rows)
    memory = math.fsum(s.memory_kib for s in rows) / len(rows)
    return ((energy - profile.energy_mean) / profile.energy_std,
            (memory - profile.memory_mean) / profile.memory_std)


def threshold_verdict(energy_z: float, memory_z: float, thresholds=DEFAULT_THRESHOLDS) -> Verdict:
    """Four-way rule; a z-score exactly at its threshold does not count."""
    tau_e, tau_m = thresholds
    energy_hit = energy_z > tau_e
    memory_hit = memory_z > tau_m
    if energy_hit and memory_hit:
        return Verdict.BOTH
    if energy_hit:
        return Verdict.ENERGY_ATTACK
    if memory_hit:
        return Verdict.MEMORY_ATTACK
    return Verdict.OTHER


def pattern_vector(features: WindowFeatures, energy_z: float, memory_z: float) -> np.ndarray:
    return np.concatenate([features.vector(), [energy_z, memory_z]])


def attribute(window: TimeWindow, profile: BaselineProfile, samples, thresholds=DEFAULT_THRESHOLDS,
              pattern_model=None, features: Optional[WindowFeatures] = None,
              confidence: float = DEFAULT_CONFIDENCE) -> AttributionResult:
    """Attribute one ATTACKED window to energy, memory, both, or other.

    The z-score rule decides unless ``pattern_model`` (trained on
    ``pattern_vector`` inputs with ``VERDICT_CLASSES``) is given and its top
    class probability reaches ``confidence``. Raises ``MissingTelemetryError``
    when the window has no telemetry.
    """
    energy_z, memory_z = deviation_scores(profile, window, samples)
    verdict = threshold_verdict(energy_z, memory_z, thresholds)
    label = score = None
    if pattern_model is not None:
        if features is None:
            raise ParameterError("pattern matching needs the window's feature vector")
        proba = pattern_model.predict_proba(pattern_vector(features, energy_z, memory_z)[None, :])[0]
        cls = int(pattern_model.predict(pattern_vector(features, energy_z, memory_z)[None, :])[0])
        label, score = Verdict(cls), float(proba[cls])
        if score >= confidence:
            verdict = label
    return AttributionResult(window, verdict, energy_z, memory_z, label, score)


def attribute_windows(windows: Sequence[TimeWindow], profiles: Mapping[str, BaselineProfile], samples,
                      thresholds=DEFAULT_THRESHOLDS, pattern_model=None,
                      features: Optional[Mapping] = None, confidence: float = DEFAULT_CONFIDENCE) -> list:
    """Attribute many windows; missing telemetry or baseline yields OTHER with a flag."""
    index = samples if isinstance(samples, TelemetryIndex) else TelemetryIndex(samples)
    out = []
    for w in windows:
        profile = profiles.get(w.device_id)
        feats = None if features is None else features.get((w.device_id, w.start))
        if profile is None:
            out.append(AttributionResult(w, Verdict.OTHER, math.nan, math.nan, missing_telemetry=True))
            continue
        try:
            out.append(attribute(w, profile, index, thresholds,
                                 pattern_model if feats is not None else None, feats, confidence))
        except MissingTelemetryError:
            out.append(AttributionResult(w, Verdict.OTHER, math.nan, math.nan, missing_telemetry=True))
    return out


def build_baselines(samples: Iterable[TelemetrySample], min_count: int = DEFAULT_MIN_BASELINE) -> dict:
    samples = list(samples)
    return {d: build_baseline(samples, d, min_count) for d in sorted({s.device_id for s in samples})}


def train_pattern_model(features: Sequence[WindowFeatures], zscores: Sequence, verdicts: Sequence[Verdict],
                        seed: int = 0, n_trees: int = 25):
    """Random forest over ``pattern_vector`` inputs with the four verdict classes."""
    from .classifiers import ModelSpec, train_model
    from .features import FEATURE_NAMES

    X = np.vstack([pattern_vector(f, ez, mz) for f, (ez, mz) in zip(features, zscores)])
    y = np.array([int(v) for v in verdicts], dtype=np.int64)
    return train_model(ModelSpec("rf", {"n_trees": n_trees}), X, y, protocol="GENERAL", seed=seed,
                       classes=VERDICT_CLASSES, feature_names=FEATURE_NAMES + ("energy_z", "memory_z"))


# ---------------------------------------------------------------------------
# telemetry CSV
# ---------------------------------------------------------------------------

def read_telemetry(stream) -> list:
    reader = csv.reader(line for line in stream if not line.startswith("#"))
    header = next(reader, None)
    if header is None:
        raise SchemaError("telemetry CSV is empty")
    header = [h.strip() for h in header]
    missing = [c for c in TELEMETRY_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"telemetry CSV is missing columns: {', '.join(missing)}")
    pos = {c: header.index(c) for c in TELEMETRY_COLUMNS}
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            state_text = row[pos["state"]].strip().upper() or "UNKNOWN"
            sample = TelemetrySample(
                timestamp=int(row[pos["timestamp_us"]]),
                device_id=row[pos["device_id"]].strip(),
                energy_mw=float(row[pos["energy_mw"]]),
                memory_kib=float(row[pos["memory_kib"]]),
                state=DeviceState(state_text),
            )
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"telemetry row {lineno}: {exc}") from None
        if not (math.isfinite(sample.energy_mw) and math.isfinite(sample.memory_kib)) \
                or sample.energy_mw < 0 or sample.memory_kib < 0:
            raise SchemaError(f"telemetry row {lineno}: readings must be finite and non-negative")
        out.append(sample)
    return out


def write_telemetry(samples: Iterable[TelemetrySample], fh, comment: Optional[str] = None) -> None:
    if comment:
        fh.write(f"# {comment}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TELEMETRY_COLUMNS)
    for s in samples:
        writer.writerow((s.timestamp, s.device_id, repr(s.energy_mw), repr(s.memory_kib), s.state.value))
