"""Per-window feature vectors for TCP and UDP traffic."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyWindowError, ParameterError, ShapeError
from .traffic import Label, PacketRecord, Protocol, TimeWindow, window_start

FEATURE_NAMES = (
    "num_packet",
    "mean_len",
    "len_stddev",
    "iden_entropy",
    "seq_irregularity",
    "dst_port_entropy",
    "dominant_port_fraction",
    "dst_ip_count",
    "src_ip_count",
)
PROTOCOL_ONE_HOT = ("is_tcp", "is_udp")
FEATURIZED = (Protocol.TCP, Protocol.UDP)


@dataclass(frozen=True)
class WindowFeatures:
    num_packet: int
    mean_len: float
    len_stddev: float
    iden_entropy: float
    seq_irregularity: float
    dst_port_entropy: float
    dominant_port_fraction: float
    dst_ip_count: int
    src_ip_count: int
    protocol: Protocol
    window: TimeWindow

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)

    @property
    def key(self):
        return (self.window.device_id, self.window.start, self.protocol.value)


def shannon_entropy(values: Iterable) -> float:
    """Plug-in Shannon entropy in bits; 0 for empty or single-valued input."""
    counts = Counter(values)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = 0.0
    for c in sorted(counts.values()):
        p = c / total
        h -= p * math.log2(p)
    return abs(h)


def _population_moments(values: Sequence[float]):
    # sorted first so the result does not depend on arrival order
    arr = np.sort(np.asarray(values, dtype=float))
    mean = math.fsum(arr) / len(arr)
    var = math.fsum((arr - mean) ** 2) / len(arr)
    return mean, math.sqrt(var)


def sequence_irregularity(seqs: Sequence[int]) -> float:
    """Spread of consecutive sequence-number steps, scaled by their size.

    Population stddev of first differences divided by ``1 + mean |diff|``:
    a constant step gives 0, random sequence numbers give roughly 1.2.
    """
    if len(seqs) < 3:
        return 0.0
    diffs = np.diff(np.asarray(seqs, dtype=np.int64)).astype(float)
    mean = diffs.mean()
    std = math.sqrt(float(np.mean((diffs - mean) ** 2)))
    return std / (1.0 + float(np.mean(np.abs(diffs))))


def extract_features(packets: Sequence[PacketRecord], protocol: Optional[Protocol] = None,
                     window: Optional[TimeWindow] = None) -> WindowFeatures:
    """Featurize the packets of one window, optionally keeping one protocol only.

    ``packets`` must be in arrival order; only ``seq_irregularity`` depends on it.
    """
    if protocol is not None:
        packets = [p for p in packets if p.protocol is protocol]
    if not packets:
        raise EmptyWindowError("window has no packets to featurize")
    if protocol is None:
        protos = {p.protocol for p in packets}
        if len(protos) != 1:
            raise ParameterError("mixed-protocol packets need a protocol filter")
        protocol = protos.pop()
    if window is None:
        window = TimeWindow("", packets[0].timestamp, 1)
    n = len(packets)
    mean_len, len_std = _population_moments([p.length for p in packets])
    ports = Counter(p.dst_port for p in packets)
    if protocol is Protocol.TCP:
        seq_irr = sequence_irregularity([p.tcp_seq for p in packets])
    else:
        seq_irr = 0.0
    return WindowFeatures(
        num_packet=n,
        mean_len=mean_len,
        len_stddev=len_std,
        iden_entropy=shannon_entropy(p.ip_id for p in packets),
        seq_irregularity=seq_irr,
        dst_port_entropy=shannon_entropy(p.dst_port for p in packets),
        dominant_port_fraction=max(ports.values()) / n,
        dst_ip_count=len({p.dst_ip for p in packets}),
        src_ip_count=len({p.src_ip for p in packets}),
        protocol=protocol,
        window=window,
    )


def device_of(pkt: PacketRecord, device_ips: Mapping[int, str]) -> Optional[str]:
    """Monitored device a packet belongs to; the destination wins over the source."""
    return device_ips.get(pkt.dst_ip) or device_ips.get(pkt.src_ip)


def group_windows(records: Iterable[PacketRecord], device_ips: Mapping[int, str],
                  duration: int, epoch: int = 0) -> dict:
    """Bucket packets into ``{TimeWindow: [packets in arrival order]}``.

    Packets not touching a monitored device are ignored.
    """
    groups = defaultdict(list)
    for pkt in records:
        device = device_of(pkt, device_ips)
        if device is None:
            continue
        start = window_start(pkt.timestamp, duration, epoch)
        groups[(device, start)].append(pkt)
    return {TimeWindow(dev, start, duration): pkts for (dev, start), pkts in sorted(groups.items())}


def featurize(records: Iterable[PacketRecord], device_ips: Mapping[int, str], duration: int,
              epoch: int = 0, protocols: Sequence[Protocol] = FEATURIZED) -> list:
    """One WindowFeatures per (device, window, protocol) that has packets."""
    out = []
    for window, pkts in group_windows(records, device_ips, duration, epoch).items():
        for proto in protocols:
            subset = [p for p in pkts if p.protocol is proto]
            if subset:
                out.append(extract_features(subset, proto, window))
    return out


def feature_matrix(features: Sequence[WindowFeatures], one_hot: bool = False) -> np.ndarray:
    """Stack feature vectors; ``one_hot`` appends (is_tcp, is_udp) for general models."""
    width = len(FEATURE_NAMES) + (2 if one_hot else 0)
    if not features:
        return np.zeros((0, width))
    X = np.vstack([f.vector() for f in features])
    if one_hot:
        tags = np.array([[f.protocol is Protocol.TCP, f.protocol is Protocol.UDP] for f in features], dtype=float)
        X = np.hstack([X, tags])
    return X


@dataclass(frozen=True)
class LabeledDataset:
    features: tuple
    labels: tuple

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ShapeError(f"{len(self.features)} feature vectors but {len(self.labels)} labels")

    def __len__(self):
        return len(self.features)

    def matrix(self, one_hot: bool = False) -> np.ndarray:
        X = feature_matrix(self.features, one_hot)
        if not np.all(np.isfinite(X)):
            raise ShapeError("feature matrix contains non-finite values")
        return X

    @property
    def y(self) -> np.ndarray:
        return np.array([int(l) for l in self.labels], dtype=np.int64)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(tuple(self.features[i] for i in indices), tuple(self.labels[i] for i in indices))

    def for_protocol(self, protocol: Protocol) -> "LabeledDataset":
        idx = [i for i, f in enumerate(self.features) if f.protocol is protocol]
        return self.subset(idx)


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardizationParams:
    mean: tuple
    std: tuple
    constant: tuple = field(default=())

    @property
    def dim(self) -> int:
        return len(self.mean)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.dim:
            raise ShapeError(f"expected {self.dim} features, got {X2.shape[1]}")
        Z = (X2 - np.asarray(self.mean)) / np.asarray(self.std)
        return Z[0] if squeeze else Z

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std), "constant": list(self.constant)}

    @classmethod
    def from_dict(cls, d) -> "StandardizationParams":
        return cls(tuple(float(v) for v in d["mean"]), tuple(float(v) for v in d["std"]),
                   tuple(bool(v) for v in d.get("constant", ())))


LEARN = "learn"


def learn_standardization(X) -> StandardizationParams:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        raise ParameterError("learning standardization needs at least 2 samples")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = ~(std > 0)
    std = np.where(constant, 1.0, std)
    return StandardizationParams(tuple(mean.tolist()), tuple(std.tolist()), tuple(constant.tolist()))


def standardize(X, params=LEARN):
    """Return ``(Z, params)``; ``params=LEARN`` fits them on ``X`` first.

    Features that are constant on the training data get stddev 1 and are
    flagged in ``params.constant``.
    """
    if isinstance(params, str):
        if params != LEARN:
            raise ParameterError(f"unknown standardization mode {params!r}")
        params = learn_standardization(X)
    return params.apply(X), params


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def write_features_csv(features: Sequence[WindowFeatures], fh, labels: Optional[Sequence[Label]] = None,
                       comment: Optional[str] = None) -> None:
    if comment:
        fh.write(f"# {comment}\n")
    writer = csv.writer(fh, lineterminator="\n")
    header = ["device_id", "window_start_us", "window_end_us", "protocol", *FEATURE_NAMES]
    if labels is not None:
        header.append("label")
    writer.writerow(header)
    for i, f in enumerate(features):
        row = [f.window.device_id, f.window.start, f.window.end, f.protocol.value,
               *(repr(float(getattr(f, n))) if isinstance(getattr(f, n), float) else getattr(f, n)
                 for n in FEATURE_NAMES)]
        if labels is not None:
            row.append(labels[i].name)
        writer.writerow(row)
