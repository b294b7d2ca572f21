"""Capture ingestion: classic pcap and CSV packet exports, cleaning, labels."""

from __future__ import annotations

import csv
import io
import struct
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import BinaryIO, Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    ConfigurationError,
    EmptyInputError,
    FormatError,
    ParseError,
    SchemaError,
    TruncationError,
    UnsupportedLinkTypeError,
)
from .traffic import Label, PacketRecord, Protocol, TimeWindow, ip_to_numeric, numeric_to_ip

PCAP_MAGIC = 0xA1B2C3D4
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800

DROP_REASONS = ("malformed", "non-IPv4", "other-proto", "duplicate", "missing-field")


@dataclass(frozen=True)
class RawDataset:
    rows: tuple
    provenance: str = ""
    format: str = ""
    dropped_counts: Mapping[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped_counts.values())

    @property
    def input_count(self) -> int:
        return len(self.rows) + self.total_dropped


# ---------------------------------------------------------------------------
# pcap
# ---------------------------------------------------------------------------

def _decode_frame(frame: bytes, timestamp: int, orig_len: int):
    """Decode one Ethernet frame. Returns a PacketRecord or a drop reason."""
    if len(frame) < 14:
        return "malformed"
    if int.from_bytes(frame[12:14], "big") != ETHERTYPE_IPV4:
        return "non-IPv4"
    ip = frame[14:]
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return "malformed" if len(ip) < 20 else "non-IPv4"
    ihl = (ip[0] & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        return "malformed"
    ip_id = int.from_bytes(ip[4:6], "big")
    if int.from_bytes(ip[6:8], "big") & 0x1FFF:
        # non-first fragment: no transport header to read
        return "malformed"
    proto = ip[9]
    src_ip = int.from_bytes(ip[12:16], "big")
    dst_ip = int.from_bytes(ip[16:20], "big")
    l4 = ip[ihl:]
    if proto == 6:
        if len(l4) < 20:
            return "malformed"
        sport, dport, seq = struct.unpack_from("!HHI", l4)
        return PacketRecord(timestamp, src_ip, dst_ip, sport, dport, Protocol.TCP, orig_len, ip_id, seq)
    if proto == 17:
        if len(l4) < 8:
            return "malformed"
        sport, dport = struct.unpack_from("!HH", l4)
        return PacketRecord(timestamp, src_ip, dst_ip, sport, dport, Protocol.UDP, orig_len, ip_id)
    return "other-proto"


def parse_pcap(data: Union[bytes, BinaryIO], provenance: str = "") -> RawDataset:
    """Parse a classic (non-ng) Ethernet pcap into packet records.

    ``length`` on each record is the original frame length from the record
    header, so header-only captures (small snaplen) keep their wire sizes.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = data.read()
    buf = memoryview(data)
    if len(buf) < 24:
        raise FormatError(f"pcap global header needs 24 bytes, got {len(buf)}")
    magic_le = int.from_bytes(buf[:4], "little")
    if magic_le == PCAP_MAGIC:
        order = "<"
    elif magic_le == 0xD4C3B2A1:
        order = ">"
    elif magic_le == PCAPNG_MAGIC:
        raise FormatError("pcapng captures are not supported; convert to classic pcap")
    else:
        raise FormatError(f"bad pcap magic 0x{int.from_bytes(buf[:4], 'big'):08x}")
    record_header = struct.Struct(order + "IIII")
    linktype = struct.unpack_from(order + "IHHiIII", buf)[6] & 0x0FFFFFFF
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinkTypeError(f"unsupported link type {linktype}; only Ethernet (1) is read")

    rows = []
    drops: Counter = Counter()
    offset = 24
    index = 0
    total = len(buf)
    unpack = record_header.unpack_from
    while offset < total:
        if total - offset < 16:
            raise TruncationError(index, f"truncated record header at packet index {index}")
        ts_sec, ts_usec, incl_len, orig_len = unpack(buf, offset)
        offset += 16
        if incl_len > total - offset:
            raise TruncationError(
                index,
                f"packet index {index} declares {incl_len} captured bytes, {total - offset} remain",
            )
        frame = bytes(buf[offset:offset + incl_len])
        offset += incl_len
        decoded = _decode_frame(frame, ts_sec * 1_000_000 + ts_usec, orig_len)
        if isinstance(decoded, str):
            drops[decoded] += 1
        else:
            rows.append(decoded)
        index += 1
    return RawDataset(tuple(rows), provenance, "pcap", dict(drops))


def read_pcap(path) -> RawDataset:
    with open(path, "rb") as fh:
        return parse_pcap(fh.read(), provenance=str(path))


def _mac_for(ip: int) -> bytes:
    return b"\x02\x00" + ip.to_bytes(4, "big")


def _ipv4_checksum(header: bytes) -> int:
    total = sum(struct.unpack("!10H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def encode_frame(rec: PacketRecord) -> bytes:
    """Build the Ethernet/IPv4/L4 header bytes for ``rec`` (no payload)."""
    if rec.protocol is Protocol.TCP:
        l4 = struct.pack("!HHIIBBHHH", rec.src_port, rec.dst_port, rec.tcp_seq or 0, 0, 5 << 4, 0x18, 65535, 0, 0)
    elif rec.protocol is Protocol.UDP:
        l4 = struct.pack("!HHHH", rec.src_port, rec.dst_port, max(rec.length - 34, 8) & 0xFFFF, 0)
    else:
        raise FormatError("only TCP and UDP records can be written")
    ip_total = max(rec.length - 14, 20 + len(l4)) & 0xFFFF
    ip = bytearray(struct.pack(
        "!BBHHHBBHII", 0x45, 0, ip_total, rec.ip_id, 0x4000, 64,
        rec.protocol.ip_number, 0, rec.src_ip, rec.dst_ip,
    ))
    ip[10:12] = _ipv4_checksum(bytes(ip)).to_bytes(2, "big")
    eth = _mac_for(rec.dst_ip) + _mac_for(rec.src_ip) + ETHERTYPE_IPV4.to_bytes(2, "big")
    return eth + bytes(ip) + l4


def write_pcap(records: Iterable[PacketRecord], fh: BinaryIO, snaplen: int = 96, byteorder: str = "<") -> None:
    """Write records as a classic Ethernet pcap.

    Frames are stored truncated to ``snaplen`` bytes with the full
    ``length`` kept as the original length, like ``tcpdump -s``.
    """
    fh.write(struct.pack(byteorder + "IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET))
    rec_header = struct.Struct(byteorder + "IIII")
    chunks = []
    for rec in records:
        frame = encode_frame(rec)
        incl = min(rec.length, snaplen)
        if incl > len(frame):
            frame = frame + bytes(incl - len(frame))
        # headers are never cut, even below snaplen
        sec, usec = divmod(rec.timestamp, 1_000_000)
        chunks.append(rec_header.pack(sec, usec, len(frame), rec.length))
        chunks.append(frame)
        if len(chunks) >= 8192:
            fh.write(b"".join(chunks))
            chunks.clear()
    fh.write(b"".join(chunks))


def pcap_bytes(records: Iterable[PacketRecord], snaplen: int = 96, byteorder: str = "<") -> bytes:
    out = io.BytesIO()
    write_pcap(records, out, snaplen=snaplen, byteorder=byteorder)
    return out.getvalue()


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

REQUIRED_COLUMNS = ("timestamp", "src_ip", "dst_ip", "src_port", "dst_port", "protocol", "bytes", "ip_id")
OPTIONAL_COLUMNS = ("tcp_seq",)
DEFAULT_SCHEMA = {name: name for name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS}


def _parse_timestamp(text: str) -> int:
    # integer microseconds, or decimal seconds as exported by Wireshark
    if "." in text or "e" in text.lower():
        return int(Decimal(text) * 1_000_000)
    return int(text)


def _parse_protocol(text: str) -> Protocol:
    text = text.strip().upper()
    if text in ("TCP", "6"):
        return Protocol.TCP
    if text in ("UDP", "17"):
        return Protocol.UDP
    return Protocol.OTHER


def _uncommented(lines: Iterable[str]):
    for line in lines:
        if line.startswith("#"):
            continue
        yield line


def parse_csv(stream, schema: Optional[Mapping[str, str]] = None, provenance: str = "") -> RawDataset:
    """Read packet rows from a CSV export.

    ``schema`` maps canonical column names (``timestamp``, ``src_ip`` ...,
    ``bytes``, ``ip_id``, optional ``tcp_seq``) to the header names used in the
    file. Leading ``#`` comment lines are skipped.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    mapping = dict(DEFAULT_SCHEMA)
    if schema:
        mapping.update(schema)
    reader = csv.reader(_uncommented(stream))
    header = next(reader, None)
    if header is None:
        raise EmptyInputError("CSV input is empty")
    header = [h.strip() for h in header]
    position = {name: i for i, name in enumerate(header)}
    missing = [col for col in REQUIRED_COLUMNS if mapping[col] not in position]
    if missing:
        raise SchemaError(f"CSV is missing required columns: {', '.join(mapping[c] for c in missing)}")
    cols = {col: position[mapping[col]] for col in REQUIRED_COLUMNS}
    seq_col = position.get(mapping["tcp_seq"])

    rows = []
    drops: Counter = Counter()
    for raw in reader:
        if not raw or all(not cell.strip() for cell in raw):
            continue
        try:
            cells = {col: raw[idx].strip() for col, idx in cols.items()}
        except IndexError:
            drops["malformed"] += 1
            continue
        if any(value == "" for value in cells.values()):
            drops["missing-field"] += 1
            continue
        protocol = _parse_protocol(cells["protocol"])
        if protocol is Protocol.OTHER:
            drops["other-proto"] += 1
            continue
        try:
            seq = None
            if protocol is Protocol.TCP:
                seq_text = raw[seq_col].strip() if seq_col is not None and seq_col < len(raw) else ""
                if seq_text == "":
                    drops["missing-field"] += 1
                    continue
                seq = int(seq_text)
            rec = PacketRecord(
                timestamp=_parse_timestamp(cells["timestamp"]),
                src_ip=ip_to_numeric(cells["src_ip"]),
                dst_ip=ip_to_numeric(cells["dst_ip"]),
                src_port=int(cells["src_port"]),
                dst_port=int(cells["dst_port"]),
                protocol=protocol,
                length=int(cells["bytes"]),
                ip_id=int(cells["ip_id"]),
                tcp_seq=seq,
            )
        except (ParseError, ValueError, InvalidOperation):
            drops["malformed"] += 1
            continue
        if not (0 <= rec.src_port < 65536 and 0 <= rec.dst_port < 65536 and 0 <= rec.ip_id < 65536
                and rec.length >= 0 and rec.timestamp >= 0 and (seq is None or 0 <= seq < 2**32)):
            drops["malformed"] += 1
            continue
        rows.append(rec)
    return RawDataset(tuple(rows), provenance, "csv", dict(drops))


def read_csv(path, schema: Optional[Mapping[str, str]] = None) -> RawDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_csv(fh, schema, provenance=str(path))


def write_csv(records: Iterable[PacketRecord], fh, comment: Optional[str] = None) -> None:
    if comment:
        fh.write(f"# {comment}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)
    for r in records:
        writer.writerow((
            r.timestamp, numeric_to_ip(r.src_ip), numeric_to_ip(r.dst_ip), r.src_port, r.dst_port,
            r.protocol.value, r.length, r.ip_id, "" if r.tcp_seq is None else r.tcp_seq,
        ))


# ---------------------------------------------------------------------------
# cleaning and labels
# ---------------------------------------------------------------------------

def _is_sentinel(rec: PacketRecord) -> bool:
    if rec.length == 0 or rec.timestamp == 0:
        return True
    if rec.protocol in (Protocol.TCP, Protocol.UDP) and (rec.src_port == 0 or rec.dst_port == 0):
        return True
    return rec.protocol is Protocol.TCP and rec.tcp_seq is None


def clean_dataset(raw: RawDataset) -> RawDataset:
    """Drop sentinel-valued records and exact duplicates, keeping first occurrences.

    Sentinels are length 0, timestamp 0, or port 0 on TCP/UDP. Drops are
    added to the incoming ``dropped_counts`` so conservation holds against
    the original input.
    """
    drops = Counter(raw.dropped_counts)
    seen = set()
    kept = []
    for rec in raw.rows:
        if _is_sentinel(rec):
            drops["missing-field"] += 1
        elif rec in seen:
            drops["duplicate"] += 1
        else:
            seen.add(rec)
            kept.append(rec)
    return RawDataset(tuple(kept), raw.provenance, raw.format, dict(drops))


@dataclass(frozen=True)
class AttackInterval:
    """Half-open attack span ``[start, end)`` in microseconds for one device.

    ``protocols`` restricts which per-protocol feature vectors the attack
    marks ATTACKED; ``None`` means all of them.
    """

    start: int
    end: int
    device_id: str
    protocols: Optional[frozenset] = None
    kind: str = ""

    def applies_to(self, protocol: Optional[Protocol]) -> bool:
        return protocol is None or self.protocols is None or protocol in self.protocols


def _as_interval(item) -> AttackInterval:
    if isinstance(item, AttackInterval):
        return item
    start, end, device_id = item[:3]
    return AttackInterval(int(start), int(end), str(device_id))


def check_intervals(intervals: Iterable) -> list:
    intervals = [_as_interval(i) for i in intervals]
    by_device: dict = {}
    for iv in intervals:
        if iv.end <= iv.start:
            raise ConfigurationError(f"empty or reversed attack interval {iv.start}..{iv.end} on {iv.device_id}")
        by_device.setdefault(iv.device_id, []).append(iv)
    for device, ivs in by_device.items():
        ivs.sort(key=lambda iv: iv.start)
        for a, b in zip(ivs, ivs[1:]):
            if b.start < a.end:
                raise ConfigurationError(
                    f"overlapping attack intervals on device {device}: "
                    f"[{a.start}, {a.end}) and [{b.start}, {b.end})"
                )
    return intervals


def join_labels(windows: Sequence[TimeWindow], attack_intervals: Iterable,
                protocol: Optional[Protocol] = None) -> list:
    """Label each window ATTACKED iff it intersects an attack interval of its device.

    Intervals are ``AttackInterval`` objects or ``(start, end, device_id)``
    tuples with half-open ``[start, end)`` spans. With ``protocol`` given, only
    intervals that apply to that protocol count.
    """
    intervals = check_intervals(attack_intervals)
    by_device: dict = {}
    for iv in intervals:
        if iv.applies_to(protocol):
            by_device.setdefault(iv.device_id, []).append(iv)
    labels = []
    for w in windows:
        hit = any(w.overlaps(iv.start, iv.end) for iv in by_device.get(w.device_id, ()))
        labels.append(Label.ATTACKED if hit else Label.NORMAL)
    return labels


def label_features(features: Sequence, attack_intervals: Iterable) -> list:
    """Per-protocol labels for WindowFeatures: each vector only sees the
    intervals that apply to its own protocol."""
    intervals = check_intervals(attack_intervals)
    labels = [None] * len(features)
    for proto in {f.protocol for f in features}:
        idx = [i for i, f in enumerate(features) if f.protocol is proto]
        for i, lab in zip(idx, join_labels([features[i].window for i in idx], intervals, proto)):
            labels[i] = lab
    return labels


def read_attack_intervals(path) -> list:
    """Read ``start_us,end_us,device_id[,kind,protocols]`` rows."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_uncommented(fh))
        need = {"start_us", "end_us", "device_id"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise SchemaError(f"{path}: attack interval file needs columns {sorted(need)}")
        for row in reader:
            protos = row.get("protocols") or ""
            protocols = frozenset(Protocol(p) for p in protos.split("|") if p) or None
            out.append(AttackInterval(int(row["start_us"]), int(row["end_us"]), row["device_id"],
                                      protocols, row.get("kind") or ""))
    return check_intervals(out)


def write_attack_intervals(intervals: Iterable[AttackInterval], fh, comment: Optional[str] = None) -> None:
    if comment:
        fh.write(f"# {comment}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("start_us", "end_us", "device_id", "kind", "protocols"))
    for iv in intervals:
        protos = "" if iv.protocols is None else "|".join(sorted(p.value for p in iv.protocols))
        writer.writerow((iv.start, iv.end, iv.device_id, iv.kind, protos))
