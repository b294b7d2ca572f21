"""Core packet, flow and window value types."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .errors import OutOfRangeError, ParameterError, ParseError

US_PER_SECOND = 1_000_000
SUPPORTED_WINDOW_SECONDS = (2, 3, 5, 10)


class Protocol(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"

    @property
    def ip_number(self) -> Optional[int]:
        return {"TCP": 6, "UDP": 17}.get(self.value)

    @classmethod
    def from_ip_number(cls, number: int) -> "Protocol":
        return {6: cls.TCP, 17: cls.UDP}.get(number, cls.OTHER)


class Label(enum.IntEnum):
    """Ground-truth / predicted window class. Integer value is the class index."""

    NORMAL = 0
    ATTACKED = 1


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One parsed IPv4 packet.

    ``timestamp`` is integer microseconds since the Unix epoch, addresses are
    unsigned 32-bit integers and ``length`` is the frame length on the wire.
    ``tcp_seq`` is ``None`` for anything but TCP.
    """

    timestamp: int
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: Protocol
    length: int
    ip_id: int
    tcp_seq: Optional[int] = None

    @property
    def flow_key(self) -> "FlowKey":
        return FlowKey(self.src_ip, self.dst_ip, self.src_port, self.dst_port, self.protocol)


@dataclass(frozen=True, slots=True)
class FlowKey:
    # Direction is significant: attacker -> victim is not the same flow as the reply.
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: Protocol


@dataclass(frozen=True, slots=True, order=True)
class TimeWindow:
    device_id: str
    start: int
    duration: int

    def __post_init__(self):
        if self.duration <= 0:
            raise ParameterError(f"window duration must be positive, got {self.duration}")

    @property
    def end(self) -> int:
        return self.start + self.duration

    def contains(self, timestamp: int) -> bool:
        return self.start <= timestamp < self.end

    def overlaps(self, start: int, end: int) -> bool:
        """True if the half-open span ``[start, end)`` intersects this window."""
        return self.start < end and start < self.end


def ip_to_numeric(dotted: str) -> int:
    """Convert a dotted quad ``a.b.c.d`` to ``a*2**24 + b*2**16 + c*2**8 + d``.

    >>> ip_to_numeric("192.168.1.1")
    3232235777
    """
    parts = dotted.strip().split(".")
    if len(parts) != 4:
        raise ParseError(f"not a dotted quad: {dotted!r}")
    value = 0
    for position, part in enumerate(parts):
        if not part.isascii() or not part.isdigit():
            raise ParseError(f"octet {position} of {dotted!r} is not a number: {part!r}")
        octet = int(part)
        if octet > 255:
            raise ParseError(f"octet {position} of {dotted!r} exceeds 255: {octet}")
        value = (value << 8) | octet
    return value


def numeric_to_ip(value: int) -> str:
    if not 0 <= value < 2**32:
        raise ParameterError(f"not an IPv4 address value: {value}")
    return ".".join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))


def window_start(timestamp: int, duration: int, epoch: int = 0) -> int:
    if duration <= 0:
        raise ParameterError(f"window duration must be positive, got {duration}")
    if timestamp < epoch:
        raise OutOfRangeError(f"timestamp {timestamp} precedes epoch {epoch}")
    return epoch + (timestamp - epoch) // duration * duration


def assign_window(pkt: PacketRecord, duration: int, epoch: int = 0, device_id: str = "") -> TimeWindow:
    """Return the aligned window of length ``duration`` holding ``pkt``."""
    return TimeWindow(device_id, window_start(pkt.timestamp, duration, epoch), duration)


def seconds_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_SECOND))
