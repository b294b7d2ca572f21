"""Detection and attribution of resource-constraint attacks on IoT devices.

Stage 1 classifies per-device traffic windows as NORMAL or ATTACKED from
TCP/UDP feature vectors; stage 2 attributes attacked windows to energy,
memory, both, or other using device telemetry.
"""

from .errors import RcdetectError
from .traffic import Label, PacketRecord, Protocol, TimeWindow, assign_window, ip_to_numeric, numeric_to_ip

__version__ = "0.1.0"

__all__ = [
    "RcdetectError", "Label", "PacketRecord", "Protocol", "TimeWindow",
    "assign_window", "ip_to_numeric", "numeric_to_ip", "__version__",
]
