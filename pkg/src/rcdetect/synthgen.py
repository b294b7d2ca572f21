"""Deterministic synthetic traffic + telemetry corpora with attack schedules.

Normal traffic follows the "regular" signatures: one steadily increasing TCP
sequence counter per device, random IP identifications, 3-8 destination
servers per window, mixed packet sizes and a single UDP service port.
Attacks invert them: random sequence numbers, a constant IP identification,
one destination (the victim), constant sizes and, for the UDP flood, random
destination ports.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attribution import DeviceState, TelemetrySample, Verdict, write_telemetry
from .errors import ConfigurationError, ParameterError
from .features import LabeledDataset, featurize
from .ingest import (
    AttackInterval,
    check_intervals,
    join_labels,
    label_features,
    write_attack_intervals,
    write_csv,
    write_pcap,
)
from .traffic import SUPPORTED_WINDOW_SECONDS, Label, PacketRecord, Protocol, TimeWindow, ip_to_numeric, numeric_to_ip

US = 1_000_000
DEVICE_NET = ip_to_numeric("192.168.1.0")
GATEWAY_IP = ip_to_numeric("192.168.1.1")
SERVICE_PORT = 5683
SERVER_PORTS = (80, 443, 1883, 8883, 5222, 8080, 8443, 5671, 9000, 3000, 7000, 5000)
SEPARATION_FEATURES = ("iden_entropy", "dst_port_entropy", "len_stddev", "num_packet")
SEPARATION_LIMIT = 0.05

# stream codes for per-(device, purpose) seed sequences
_NORMAL, _SCHEDULE, _TELEMETRY, _SERVERS = 1, 2, 3, 4


class AttackKind(str, enum.Enum):
    DDOS = "DDOS"
    EC_DDOS = "EC_DDOS"
    MEMORY_EXHAUST = "MEMORY_EXHAUST"

    @property
    def protocol(self) -> Protocol:
        return Protocol.UDP if self is AttackKind.EC_DDOS else Protocol.TCP

    @property
    def verdict(self) -> Verdict:
        return Verdict.MEMORY_ATTACK if self is AttackKind.MEMORY_EXHAUST else Verdict.ENERGY_ATTACK

    @property
    def code(self) -> int:
        return 10 + list(AttackKind).index(self)


@dataclass(frozen=True)
class AttackSpec:
    """One scheduled attack; times are seconds from the scenario start."""

    kind: AttackKind
    start_s: float
    end_s: float
    device: int


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 42
    n_devices: int = 5
    duration_s: int = 600
    window_s: int = 2
    schedule: Optional[tuple] = None  # None -> default_schedule(cfg)
    normal_rate: float = 50.0
    attack_rate: float = 250.0
    memory_attack_rate: float = 150.0
    tcp_fraction: float = 0.6
    telemetry_period_s: float = 0.25
    energy_mean: float = 100.0
    energy_std: float = 5.0
    memory_mean: float = 2048.0
    memory_std: float = 40.0
    attacks_per_device: int = 3
    start_us: int = 1_700_000_010 * US  # multiple of 30 s, so every supported window size aligns
    check_separation: bool = True

    def __post_init__(self):
        if self.window_s not in SUPPORTED_WINDOW_SECONDS:
            raise ConfigurationError(f"window_s must be one of {SUPPORTED_WINDOW_SECONDS}, got {self.window_s}")
        if min(self.normal_rate, self.attack_rate, self.memory_attack_rate, self.telemetry_period_s) <= 0:
            raise ConfigurationError("rates and telemetry period must be positive")
        if self.n_devices < 1 or self.duration_s <= 0:
            raise ConfigurationError("need at least one device and a positive duration")
        if self.schedule is not None:
            object.__setattr__(self, "schedule", tuple(
                s if isinstance(s, AttackSpec) else AttackSpec(AttackKind(s[0]), float(s[1]), float(s[2]), int(s[3]))
                for s in self.schedule
            ))
            for s in self.schedule:
                if not 0 <= s.device < self.n_devices:
                    raise ConfigurationError(f"attack targets unknown device {s.device}")
                if not 0 <= s.start_s < s.end_s <= self.duration_s:
                    raise ConfigurationError(f"attack span {s.start_s}..{s.end_s} outside the scenario")
            check_intervals(attack_intervals(self))

    @property
    def window_us(self) -> int:
        return self.window_s * US

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_s * US

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "schedule"}
        d["schedule"] = [[s.kind.value, s.start_s, s.end_s, s.device] for s in effective_schedule(self)]
        return d


def device_id(index: int) -> str:
    return f"dev{index}"


def device_ip(index: int) -> int:
    return DEVICE_NET + 10 + index


def device_map(cfg: ScenarioConfig) -> dict:
    """``{ip_numeric: device_id}`` for the scenario's devices."""
    return {device_ip(i): device_id(i) for i in range(cfg.n_devices)}


def _stream(cfg: ScenarioConfig, device: int, code: int, span_start: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(device), int(code), int(span_start)]))


def default_schedule(cfg: ScenarioConfig) -> tuple:
    """Each device gets ``attacks_per_device`` attacks, one per equal time segment.

    Kinds cycle through a per-device permutation; lengths are 20-60 s and all
    boundaries fall on window edges.
    """
    w = cfg.window_s
    n_windows = cfg.duration_s // w
    per = cfg.attacks_per_device
    if per < 1:
        return ()
    seg = n_windows // per
    hi = min(60 // w, seg - 2)
    lo = min(max(1, math.ceil(20 / w)), hi)
    if hi < 1:
        return ()
    kinds = list(AttackKind)
    out = []
    for dev in range(cfg.n_devices):
        rng = _stream(cfg, dev, _SCHEDULE)
        order = rng.permutation(len(kinds))
        for j in range(per):
            length = int(rng.integers(lo, hi + 1))
            first = j * seg + 1
            start = int(rng.integers(first, j * seg + seg - length))
            kind = kinds[order[j % len(kinds)]]
            out.append(AttackSpec(kind, float(start * w), float((start + length) * w), dev))
    return tuple(out)


def effective_schedule(cfg: ScenarioConfig) -> tuple:
    return default_schedule(cfg) if cfg.schedule is None else cfg.schedule


def attack_intervals(cfg: ScenarioConfig) -> list:
    return [
        AttackInterval(cfg.start_us + int(round(s.start_s * US)), cfg.start_us + int(round(s.end_s * US)),
                       device_id(s.device), frozenset({s.kind.protocol}), s.kind.value)
        for s in effective_schedule(cfg)
    ]


def _arrivals(rng, rate: float, span) -> np.ndarray:
    start, end = span
    n = rng.poisson(rate * (end - start) / US)
    offsets = np.sort(rng.integers(0, end - start, size=n))
    return start + offsets


def _window_index(cfg, ts: np.ndarray) -> np.ndarray:
    return (ts - cfg.start_us) // cfg.window_us


def _mixed_lengths(rng, n, small, large, p_small) -> np.ndarray:
    is_small = rng.random(n) < p_small
    return np.where(is_small, rng.integers(small[0], small[1] + 1, n), rng.integers(large[0], large[1] + 1, n))


def _servers(cfg, device: int):
    rng = _stream(cfg, device, _SERVERS)
    ips = ip_to_numeric("34.0.0.0") + (device << 8) + 1 + np.arange(12)
    ports = rng.permutation(np.array(SERVER_PORTS))
    sports = rng.integers(49152, 65536, size=12)
    return ips, ports, sports


def gen_normal_traffic(cfg: ScenarioConfig, device: int, span=None) -> list:
    """Regular traffic of one device over ``span = (start_us, end_us)``."""
    span = span or (cfg.start_us, cfg.end_us)
    rng = _stream(cfg, device, _NORMAL, span[0])
    ts = _arrivals(rng, cfg.normal_rate, span)
    n = len(ts)
    is_tcp = rng.random(n) < cfg.tcp_fraction
    ip_ids = rng.integers(0, 65536, n)
    tcp_len = _mixed_lengths(rng, n, (54, 90), (200, 1514), 0.4)
    udp_len = _mixed_lengths(rng, n, (42, 120), (200, 1200), 0.5)
    server_ips, server_ports, server_sports = _servers(cfg, device)

    # 3-8 servers per window; the first packets of a window visit each once
    server = np.zeros(n, dtype=np.int64)
    win = _window_index(cfg, ts)
    tcp_idx = np.flatnonzero(is_tcp)
    if len(tcp_idx):
        bounds = np.flatnonzero(np.diff(win[tcp_idx])) + 1
        for group in np.split(tcp_idx, bounds):
            k = int(rng.integers(3, 9))
            subset = rng.choice(len(server_ips), size=k, replace=False)
            pick = rng.integers(0, k, len(group))
            pick[: min(k, len(group))] = np.arange(min(k, len(group)))
            server[group] = subset[pick]

    me = device_ip(device)
    seq = int(rng.integers(0, 2**30))
    step = int(rng.integers(500, 1449))
    out = []
    for t, tcp, ipid, tl, ul, srv in zip(ts.tolist(), is_tcp.tolist(), ip_ids.tolist(),
                                         tcp_len.tolist(), udp_len.tolist(), server.tolist()):
        if tcp:
            out.append(PacketRecord(t, me, int(server_ips[srv]), int(server_sports[srv]), int(server_ports[srv]),
                                    Protocol.TCP, tl, ipid, seq))
            seq = (seq + step) % 2**32
        else:
            out.append(PacketRecord(t, me, GATEWAY_IP, 40000 + device, SERVICE_PORT, Protocol.UDP, ul, ipid))
    return out


def gen_attack_traffic(cfg: ScenarioConfig, kind, device: int, span) -> list:
    """Attack packets aimed at one device over ``span = (start_us, end_us)``."""
    try:
        kind = AttackKind(kind)
    except ValueError:
        raise ParameterError(f"unknown attack kind {kind!r}") from None
    rng = _stream(cfg, device, kind.code, span[0])
    victim = device_ip(device)
    ip_id = int(rng.integers(0, 65536))
    if kind is AttackKind.DDOS:
        ts = _arrivals(rng, cfg.attack_rate, span)
        n = len(ts)
        srcs = ip_to_numeric("10.0.0.0") + rng.integers(1, 2**24 - 1, n)
        sports = rng.integers(1024, 65536, n)
        seqs = rng.integers(0, 2**32, n)
        return [PacketRecord(t, s, victim, sp, 80, Protocol.TCP, 60, ip_id, q)
                for t, s, sp, q in zip(ts.tolist(), srcs.tolist(), sports.tolist(), seqs.tolist())]
    if kind is AttackKind.EC_DDOS:
        ts = _arrivals(rng, cfg.attack_rate, span)
        n = len(ts)
        bots = ip_to_numeric("172.16.0.0") + rng.integers(1, 65535, 20)
        srcs = bots[rng.integers(0, len(bots), n)]
        sports = rng.integers(1024, 65536, n)
        # ports are distinct inside each window: uniform draws without replacement
        dports = np.zeros(n, dtype=np.int64)
        win = _window_index(cfg, ts)
        bounds = np.flatnonzero(np.diff(win)) + 1
        for group in np.split(np.arange(n), bounds):
            if len(group):
                dports[group] = 1024 + rng.choice(65536 - 1024, size=len(group), replace=False)
        return [PacketRecord(t, s, victim, sp, dp, Protocol.UDP, 512, ip_id)
                for t, s, sp, dp in zip(ts.tolist(), srcs.tolist(), sports.tolist(), dports.tolist())]
    ts = _arrivals(rng, cfg.memory_attack_rate, span)
    n = len(ts)
    attacker = ip_to_numeric("172.31.0.0") + int(rng.integers(1, 65535))
    sports = rng.integers(1024, 65536, n)
    seqs = rng.integers(0, 2**32, n)
    return [PacketRecord(t, attacker, victim, sp, 1883, Protocol.TCP, 1024, ip_id, q)
            for t, sp, q in zip(ts.tolist(), sports.tolist(), seqs.tolist())]


def gen_telemetry(cfg: ScenarioConfig, device: int, span=None, attacks: Sequence[AttackSpec] = ()) -> list:
    """Energy/memory samples every ``telemetry_period_s``.

    DDOS and EC_DDOS add +10 sigma to energy, EC_DDOS also +2 sigma to memory
    (below the default attribution threshold). MEMORY_EXHAUST raises memory
    from +5 sigma at the start of the attack to +10 sigma at its end.
    """
    span = span or (cfg.start_us, cfg.end_us)
    rng = _stream(cfg, device, _TELEMETRY, span[0])
    period = int(round(cfg.telemetry_period_s * US))
    ts = np.arange(span[0], span[1], period, dtype=np.int64)
    energy = rng.normal(cfg.energy_mean, cfg.energy_std, len(ts))
    memory = rng.normal(cfg.memory_mean, cfg.memory_std, len(ts))
    abnormal = np.zeros(len(ts), dtype=bool)
    for a in attacks:
        if a.device != device:
            continue
        s = cfg.start_us + int(round(a.start_s * US))
        e = cfg.start_us + int(round(a.end_s * US))
        inside = (ts >= s) & (ts < e)
        abnormal |= inside
        if a.kind in (AttackKind.DDOS, AttackKind.EC_DDOS):
            energy[inside] += 10 * cfg.energy_std
        if a.kind is AttackKind.EC_DDOS:
            memory[inside] += 2 * cfg.memory_std
        if a.kind is AttackKind.MEMORY_EXHAUST:
            frac = (ts[inside] - s) / (e - s)
            memory[inside] += 10 * cfg.memory_std * (0.5 + 0.5 * frac)
    energy = np.maximum(energy, 0.0)
    memory = np.maximum(memory, 0.0)
    dev = device_id(device)
    return [
        TelemetrySample(t, dev, float(en), float(me), DeviceState.ABNORMAL if ab else DeviceState.NORMAL)
        for t, en, me, ab in zip(ts.tolist(), energy.tolist(), memory.tolist(), abnormal.tolist())
    ]


@dataclass(frozen=True)
class WindowTruth:
    window: TimeWindow
    label: Label
    tcp_label: Label
    udp_label: Label
    kind: Optional[AttackKind]
    verdict: Optional[Verdict]


@dataclass
class SyntheticCorpus:
    config: ScenarioConfig
    packets: list
    telemetry: list
    intervals: list
    truth: list
    devices: dict
    features: list = field(default_factory=list)

    def truth_by_window(self) -> dict:
        return {(t.window.device_id, t.window.start): t for t in self.truth}

    def dataset(self) -> LabeledDataset:
        """Feature vectors with their per-protocol ground-truth labels."""
        return LabeledDataset(tuple(self.features), tuple(label_features(self.features, self.intervals)))


def window_truth(cfg: ScenarioConfig) -> list:
    """Ground truth for every (device, window) derived from the schedule alone."""
    intervals = attack_intervals(cfg)
    windows = [TimeWindow(device_id(d), cfg.start_us + k * cfg.window_us, cfg.window_us)
               for d in range(cfg.n_devices) for k in range(cfg.duration_s // cfg.window_s)]
    labels = join_labels(windows, intervals)
    tcp = join_labels(windows, intervals, Protocol.TCP)
    udp = join_labels(windows, intervals, Protocol.UDP)
    out = []
    for w, lab, lt, lu in zip(windows, labels, tcp, udp):
        kind = None
        for iv in intervals:
            if iv.device_id == w.device_id and w.overlaps(iv.start, iv.end):
                kind = AttackKind(iv.kind)
                break
        out.append(WindowTruth(w, lab, lt, lu, kind, None if kind is None else kind.verdict))
    return out


def overlap_coefficient(a, b, bins: int = 40) -> float:
    """Shared histogram mass of two samples over their pooled range."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        return 1.0
    ha, _ = np.histogram(a, bins=bins, range=(lo, hi))
    hb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    return float(np.minimum(ha / len(a), hb / len(b)).sum())


def signature_overlap(features, labels) -> dict:
    """``{(protocol, feature): overlap}`` between NORMAL and ATTACKED vectors."""
    out = {}
    for p in (Protocol.TCP, Protocol.UDP):
        rows = [(f, l) for f, l in zip(features, labels) if f.protocol is p]
        normal = [f for f, l in rows if l is Label.NORMAL]
        attack = [f for f, l in rows if l is Label.ATTACKED]
        if not normal or not attack:
            continue
        for name in SEPARATION_FEATURES:
            out[(p.value, name)] = overlap_coefficient([getattr(f, name) for f in normal],
                                                       [getattr(f, name) for f in attack])
    return out


def build_corpus(cfg: ScenarioConfig) -> SyntheticCorpus:
    """Generate packets, telemetry and ground truth for a scenario.

    With ``cfg.check_separation`` the normal and attack feature distributions
    are compared and the build aborts if any signature feature overlaps by
    ``SEPARATION_LIMIT`` or more.
    """
    schedule = effective_schedule(cfg)
    intervals = attack_intervals(cfg)
    packets = []
    telemetry = []
    for dev in range(cfg.n_devices):
        packets.extend(gen_normal_traffic(cfg, dev))
        for a in schedule:
            if a.device == dev:
                span = (cfg.start_us + int(round(a.start_s * US)), cfg.start_us + int(round(a.end_s * US)))
                packets.extend(gen_attack_traffic(cfg, a.kind, dev, span))
        telemetry.extend(gen_telemetry(cfg, dev, attacks=schedule))
    packets.sort(key=lambda p: p.timestamp)
    telemetry.sort(key=lambda s: s.timestamp)
    devices = device_map(cfg)
    feats = featurize(packets, devices, cfg.window_us, epoch=cfg.start_us)
    corpus = SyntheticCorpus(cfg, packets, telemetry, intervals, window_truth(cfg), devices, feats)
    if cfg.check_separation:
        overlaps = signature_overlap(feats, label_features(feats, intervals))
        bad = {k: v for k, v in overlaps.items() if v >= SEPARATION_LIMIT}
        if bad:
            detail = ", ".join(f"{p}/{n}={v:.3f}" for (p, n), v in sorted(bad.items()))
            raise ConfigurationError(f"normal and attack signatures overlap too much: {detail}")
    return corpus


CORPUS_FILES = {
    "pcap": "capture.pcap",
    "csv": "packets.csv",
    "telemetry": "telemetry.csv",
    "attacks": "attacks.csv",
    "labels": "labels.csv",
    "devices": "devices.csv",
}


def write_corpus(corpus: SyntheticCorpus, out_dir, comment: Optional[str] = None) -> dict:
    """Write every corpus file into ``out_dir``; returns ``{role: path}``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {role: os.path.join(out_dir, name) for role, name in CORPUS_FILES.items()}
    with open(paths["pcap"], "wb") as fh:
        write_pcap(corpus.packets, fh)
    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        write_csv(corpus.packets, fh, comment)
    with open(paths["telemetry"], "w", encoding="utf-8", newline="") as fh:
        write_telemetry(corpus.telemetry, fh, comment)
    with open(paths["attacks"], "w", encoding="utf-8", newline="") as fh:
        write_attack_intervals(corpus.intervals, fh, comment)
    with open(paths["labels"], "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("device_id,window_start_us,window_end_us,label,tcp_label,udp_label,attack_kind,expected_verdict\n")
        for t in corpus.truth:
            fh.write(f"{t.window.device_id},{t.window.start},{t.window.end},{t.label.name},{t.tcp_label.name},"
                     f"{t.udp_label.name},{t.kind.value if t.kind else ''},{t.verdict.name if t.verdict else ''}\n")
    with open(paths["devices"], "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("device_id,ip\n")
        for ip, dev in sorted(corpus.devices.items(), key=lambda kv: kv[1]):
            fh.write(f"{dev},{numeric_to_ip(ip)}\n")
    return paths


def read_devices(path) -> dict:
    """Read a ``device_id,ip`` file into ``{ip_numeric: device_id}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            out[ip_to_numeric(row["ip"])] = row["device_id"].strip()
    return out
